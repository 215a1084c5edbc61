// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero when any of them fails. Thresholds live in the constants
// below; raw numbers are printed next to every verdict.
//
//   acceptance            all nine criteria (about 20 minutes on one core)
//   acceptance --fast     criteria 1, 2, 3, 8 and 9 only

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "ppkt/evalkit.hpp"
#include "ppkt/geometry.hpp"
#include "ppkt/losses.hpp"
#include "ppkt/ops.hpp"
#include "ppkt/trainer.hpp"

using namespace ppkt;
namespace fs = std::filesystem;

namespace {

// Reference data: the training split is the GenConfig default (seed 7,
// 8 scenes x 32 frames), the held-out split uses its own seed.
constexpr std::uint64_t kHeldoutSeed = 8;
constexpr std::size_t kHeldoutScenes = 4, kHeldoutFramesPerScene = 16;

constexpr double kPipelineGradTol = 1e-4;
constexpr double kLossGradTol = 1e-5;
constexpr double kGradCheckSeconds = 60;
constexpr double kOracleTol = 1e-10;
constexpr double kIdenticalTol = 1e-9;
constexpr double kPixelTol = 1e-6;
constexpr double kSurfaceTol = 1e-4;
constexpr double kRetrievalTarget = 0.9;
constexpr std::size_t kRetrievalPairs = 256;
constexpr double kRetrievalSeconds = 600;
constexpr double kChanceConfidence = 0.99;
constexpr std::size_t kDiversityMinFrames = 50;
constexpr std::size_t kDiversitySamples = 1000;
constexpr double kFastSeconds = 300;
constexpr double kTrainingSeconds = 45 * 60;
const std::vector<double> kFractions{1.0, 0.5, 0.3, 0.15};
// Training-run oracle, pinned from the reference run: averaged over the last
// kTailSteps steps, loss_mean must sit below step 0 and the positive-pair
// cosine above kPosSimFloor (the reference run ends near 0.43).
constexpr std::size_t kTailSteps = 50;
constexpr double kPosSimFloor = 0.3;

struct Clock {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }
};

std::string num(double v, int digits = 4) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

std::string signed_num(double v) { return (v >= 0 ? "+" : "") + num(v); }

struct Verdict {
  int id = 0;
  bool pass = false;
  std::string detail;
};

std::vector<Verdict> verdicts;

void report(int id, bool pass, const std::string& detail) {
  verdicts.push_back({id, pass, detail});
  std::cout << "criterion " << id << ": " << (pass ? "PASS" : "FAIL") << "  " << detail << std::endl;
}

void note(const std::string& s) { std::cout << "  " << s << std::endl; }

std::vector<unsigned char> bytes_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool same_tree(const fs::path& a, const fs::path& b) {
  std::vector<fs::path> fa, fb;
  for (const auto& e : fs::directory_iterator(a)) fa.push_back(e.path().filename());
  for (const auto& e : fs::directory_iterator(b)) fb.push_back(e.path().filename());
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  if (fa != fb) return false;
  for (const auto& f : fa) {
    if (bytes_of(a / f) != bytes_of(b / f)) return false;
  }
  return true;
}

DenseArray unit_rows(std::size_t m, std::size_t c, Rng& rng) {
  DenseArray a({m, c});
  for (double& v : a.data()) v = rng.uniform(-1.0, 1.0);
  return l2_normalize_rows(a);
}

DenseArray uniform_array(Shape shape, Rng& rng, double lo, double hi) {
  DenseArray a(std::move(shape));
  for (double& v : a.data()) v = rng.uniform(lo, hi);
  return a;
}

// ---- criterion 1 --------------------------------------------------------------------

double loss_grad_error(const std::function<LossOutput(const DenseArray&, const DenseArray&)>& loss, DenseArray a,
                       DenseArray b, bool both_sides) {
  ParamStore p;
  p.add("a", std::move(a));
  p.add("b", std::move(b), both_sides);
  Rng rng(99);
  return grad_check(
             [&](ParamStore& q) {
               const LossOutput out = loss(q.value("a"), q.value("b"));
               add_inplace(q.grad("a"), out.grad_first);
               if (both_sides) add_inplace(q.grad("b"), out.grad_second);
               return out.value;
             },
             p, 1e-5, 200, rng)
      .max_rel_error;
}

void criterion_gradients() {
  const Clock clock;
  double pipeline_worst = 0.0;
  std::ostringstream raw;
  for (LossKind kind : {LossKind::ppnce, LossKind::ppkd, LossKind::global_l2, LossKind::global_nce}) {
    const GradCheckReport r = pipeline_grad_check(kind, 1);
    pipeline_worst = std::max(pipeline_worst, r.max_rel_error);
    raw << to_string(kind) << " " << sci(r.max_rel_error) << "  ";
  }
  note("pipeline: " + raw.str());

  Rng rng(21);
  std::vector<std::pair<std::string, double>> standalone;
  standalone.emplace_back("ppnce", loss_grad_error([](const DenseArray& a, const DenseArray& b) { return ppnce(a, b, 0.04); },
                                                   unit_rows(32, 16, rng), unit_rows(32, 16, rng), true));
  standalone.emplace_back("ppkd", loss_grad_error([](const DenseArray& s, const DenseArray& t) { return ppkd(t, s, 4.0); },
                                                  uniform_array({12, 6}, rng, -2, 2), uniform_array({12, 6}, rng, -2, 2),
                                                  false));
  standalone.emplace_back("global_l2", loss_grad_error([](const DenseArray& a, const DenseArray& b) { return global_l2(a, b); },
                                                       unit_rows(10, 8, rng), unit_rows(10, 8, rng), false));
  standalone.emplace_back("global_nce",
                          loss_grad_error([](const DenseArray& a, const DenseArray& b) { return global_nce(a, b, 0.04); },
                                          unit_rows(6, 8, rng), unit_rows(6, 8, rng), false));
  const std::vector<int> labels{0, 2, 1, -1, 2};
  standalone.emplace_back("cross_entropy",
                          loss_grad_error([&](const DenseArray& l, const DenseArray&) { return cross_entropy(l, labels); },
                                          uniform_array({5, 3}, rng, -2, 2), DenseArray({1}), false));
  double loss_worst = 0.0;
  std::string loss_raw;
  for (const auto& [name, err] : standalone) {
    loss_worst = std::max(loss_worst, err);
    loss_raw += name + " " + sci(err) + "  ";
  }
  note("standalone: " + loss_raw);

  const double secs = clock.seconds();
  report(1, pipeline_worst < kPipelineGradTol && loss_worst < kLossGradTol && secs < kGradCheckSeconds,
         "pipeline max rel err " + sci(pipeline_worst) + " (< " + sci(kPipelineGradTol) + "), losses " + sci(loss_worst) +
             " (< " + sci(kLossGradTol) + "), " + num(secs, 1) + " s (< " + num(kGradCheckSeconds, 0) + " s)");
}

// ---- criterion 2 --------------------------------------------------------------------

double naive_ppnce(const DenseArray& a, const DenseArray& b, double tau) {
  long double total = 0;
  const std::size_t m = a.dim(0), c = a.dim(1);
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<long double> s(m);
    for (std::size_t j = 0; j < m; ++j) {
      long double d = 0;
      for (std::size_t k = 0; k < c; ++k) d += static_cast<long double>(a.at(i, k)) * b.at(j, k);
      s[j] = d / tau;
    }
    long double denom = 0;
    for (std::size_t j = 0; j < m; ++j) denom += std::exp(s[j]);
    total -= std::log(std::exp(s[i]) / denom);
  }
  return static_cast<double>(total);
}

void criterion_oracle() {
  Rng rng(22);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t m = 2 + rng.below(63), c = 1 + rng.below(32);
    const DenseArray a = unit_rows(m, c, rng), b = unit_rows(m, c, rng);
    worst = std::max(worst, std::abs(ppnce(a, b, 0.04, false).value - naive_ppnce(a, b, 0.04)));
  }
  double identical_worst = 0.0;
  for (std::size_t m : {2, 7, 33, 64, 256}) {
    const DenseArray row = unit_rows(1, 16, rng);
    DenseArray z({m, 16});
    for (std::size_t i = 0; i < m; ++i) std::copy(row.data().begin(), row.data().end(), z.row(i).begin());
    const double expect = static_cast<double>(m) * std::log(static_cast<double>(m));
    identical_worst = std::max(identical_worst, std::abs(ppnce(z, z, 0.04, false).value - expect));
  }
  double single = 0.0;
  for (int rep = 0; rep < 10; ++rep) single = std::max(single, std::abs(ppnce(unit_rows(1, 8, rng), unit_rows(1, 8, rng), 0.04).value));
  report(2, worst <= kOracleTol && identical_worst <= kIdenticalTol && single == 0.0,
         "oracle max |diff| " + sci(worst) + " over 100 instances (<= " + sci(kOracleTol) + "), identical rows " +
             sci(identical_worst) + " from M ln M, M=1 loss " + sci(single));
}

// ---- criterion 3 --------------------------------------------------------------------

void criterion_geometry() {
  Rng rng(23);
  const CameraIntrinsics intr;
  double pixel_worst = 0.0, surface_worst = 0.0;
  std::size_t points = 0;
  bool all_valid = true;
  for (int i = 0; i < 20; ++i) {
    const SceneSpec scene = generate_scene(rng, 3 + rng.below(6));
    const CameraPose pose = sample_camera_pose(scene, rng);
    const RgbdFrame f = render_frame(scene, pose, intr, 0.01, rng);
    const CameraBasis basis = camera_basis(pose);
    const PointCloud pc = back_project(f.color, f.depth, intr);
    const Projection pr = project(pc.coords, intr);
    for (std::size_t k = 0; k < pc.size(); ++k) {
      const auto idx = static_cast<std::size_t>(pc.pixel_index[k]);
      all_valid = all_valid && pr.valid[k];
      const double du = pr.pixels.at(k, 0) - static_cast<double>(idx % intr.width);
      const double dv = pr.pixels.at(k, 1) - static_cast<double>(idx / intr.width);
      pixel_worst = std::max(pixel_worst, std::hypot(du, dv));
      const Vec3 w = basis.to_world({pc.coords.at(k, 0), pc.coords.at(k, 1), pc.coords.at(k, 2)});
      double best = 1e300;
      for (const auto& b : scene.boxes) {
        if (b.class_id == f.labels[idx]) best = std::min(best, b.box.surface_distance(w));
      }
      surface_worst = std::max(surface_worst, best);
      ++points;
    }
  }
  report(3, all_valid && points > 0 && pixel_worst < kPixelTol && surface_worst < kSurfaceTol,
         std::to_string(points) + " points from 20 frames, max pixel error " + sci(pixel_worst) + " px (< " +
             sci(kPixelTol) + "), max surface distance " + sci(surface_worst) + " m (< " + sci(kSurfaceTol) + ")");
}

// ---- criterion 8 --------------------------------------------------------------------

void criterion_diversity(const std::vector<RgbdFrame>& heldout, const ParamStore& teacher) {
  Rng rng(5, 4);
  const DiversityResult d = feature_diversity(heldout, teacher, kDiversitySamples, rng);
  report(8, heldout.size() >= kDiversityMinFrames && d.pixel_mean_cos < d.global_mean_cos,
         "pixel_mean_cos " + num(d.pixel_mean_cos) + " < global_mean_cos " + num(d.global_mean_cos) + " over " +
             std::to_string(heldout.size()) + " held-out frames");
}

// ---- criterion 9 --------------------------------------------------------------------

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ppkt");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) note("ppkt " + args[1] + " exited " + std::to_string(code) + ": " + err.str());
  return code;
}

// Runs every CLI stage twice into separate directories and compares the
// outputs byte for byte; also checks the file formats round trip.
bool determinism_and_formats(const fs::path& work, std::string& detail) {
  std::vector<std::string> failed;
  const auto expect = [&](bool ok, const std::string& what) {
    if (!ok) failed.push_back(what);
  };
  const std::vector<std::string> tiny{"--student-widths", "16,16", "--embed-dim", "16"};
  const auto with = [](std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };

  // both runs use the same paths (metrics rows quote them), then move aside
  for (const char* run : {"a", "b"}) {
    const fs::path dir = work / "run";
    fs::create_directories(dir);
    const std::string d = (dir / "data").string(), t = (dir / "teacher.ppkc").string(), p = (dir / "student.ppkc").string();
    expect(cli({"gen-data", "--out", d, "--scenes", "2", "--frames-per-scene", "4", "--seed", "31"}) == 0, "gen-data");
    expect(cli({"pretrain-teacher", "--data", d, "--out", t, "--steps", "20", "--metrics", (dir / "teacher.csv").string()}) == 0,
           "pretrain-teacher");
    expect(cli(with({"pretrain", "--data", d, "--teacher", t, "--out", p, "--steps", "5", "--metrics",
                     (dir / "pretrain.csv").string()},
                    tiny)) == 0,
           "pretrain");
    expect(cli({"eval-retrieval", "--data", d, "--checkpoint", p, "--metrics", (dir / "retrieval.csv").string()}) == 0,
           "eval-retrieval");
    expect(cli({"probe", "--train-data", d, "--heldout-data", d, "--checkpoint", p, "--probe-steps", "30",
                "--labeled-fraction", "0.5", "--metrics", (dir / "probe.csv").string(), "--embeddings",
                (dir / "emb.csv").string()}) == 0,
           "probe");
    expect(cli({"diversity", "--data", d, "--teacher", t, "--samples", "200", "--metrics", (dir / "div.csv").string()}) == 0,
           "diversity");
    fs::rename(dir, work / run);
  }
  const fs::path a = work / "a", b = work / "b";
  expect(same_tree(a / "data", b / "data"), "dataset bytes");
  for (const char* f : {"teacher.ppkc", "teacher.csv", "student.ppkc", "pretrain.csv", "retrieval.csv", "probe.csv", "emb.csv",
                        "div.csv"}) {
    expect(fs::exists(a / f) && bytes_of(a / f) == bytes_of(b / f), f);
  }

  // frame files: reading gives the rendered frame with quantised colour,
  // writing that back reproduces the file
  GenConfig g;
  g.scenes = 2;
  g.frames_per_scene = 3;
  g.seed = 32;
  const auto frames = generate_frames(g);
  expect(frames == generate_frames(g), "generate_frames repeat");
  bool frames_ok = true;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const fs::path f1 = work / ("f" + std::to_string(i) + ".ppkf"), f2 = work / ("g" + std::to_string(i) + ".ppkf");
    write_frame(f1, frames[i], g.class_count);
    int classes = 0;
    const RgbdFrame back = read_frame(f1, &classes);
    RgbdFrame expected = frames[i];
    expected.color = quantize_color(frames[i].color);
    write_frame(f2, back, classes);
    frames_ok = frames_ok && back == expected && classes == g.class_count && bytes_of(f1) == bytes_of(f2);
  }
  expect(frames_ok, "frame round trip");

  const Checkpoint ck = load_checkpoint(a / "student.ppkc");
  const fs::path again = work / "again.ppkc";
  save_checkpoint(again, ck.params, ck.step);
  bool ck_ok = bytes_of(again) == bytes_of(a / "student.ppkc");
  const Checkpoint ck2 = load_checkpoint(again);
  for (const auto& p : ck.params) {
    const Param& q = ck2.params.get(p.name);
    ck_ok = ck_ok && q.value.shape() == p.value.shape() &&
            std::memcmp(q.value.data().data(), p.value.data().data(), p.value.size() * sizeof(double)) == 0;
  }
  expect(ck_ok && ck2.params.size() == ck.params.size(), "checkpoint round trip");

  if (failed.empty()) {
    detail = "all stages byte-identical across two runs, frame and checkpoint round trips bit-exact";
    return true;
  }
  detail = "mismatch in:";
  for (const auto& f : failed) detail += " " + f;
  return false;
}

// ---- training criteria --------------------------------------------------------------

struct Probed {
  double pre = 0.0, scratch = 0.0;
  double gap() const { return pre - scratch; }
};

ProbeReport probe(const std::vector<RgbdFrame>& train, const std::vector<RgbdFrame>& heldout, const ParamStore& params,
                  const ModelConfig& base, double fraction) {
  ModelConfig model = infer_model(params, base);
  ProbeConfig pc;
  pc.labeled_fraction = fraction;
  return linear_probe(train, heldout, params, model, pc);
}

TrainResult pretrain(const std::vector<RgbdFrame>& train, const ParamStore& teacher, const TrainConfig& cfg,
                     const std::string& tag) {
  const Clock clock;
  TrainResult r = run_pretrain(train, teacher, cfg, [&](const StepMetrics& m) {
    if (m.step % 500 == 0 || m.step + 1 == cfg.steps) {
      note(tag + " step " + std::to_string(m.step) + " loss_mean " + num(m.loss_mean) + " pos_sim " +
           num(m.pos_sim_mean));
    }
  });
  note(tag + " pretrain took " + num(clock.seconds(), 1) + " s");
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  const bool fast_only = argc > 1 && std::strcmp(argv[1], "--fast") == 0;
  const fs::path work = fs::temp_directory_path() / "ppkt_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  bool training_run_ok = true;
  try {
    const Clock fast_clock;
    criterion_gradients();
    criterion_oracle();
    criterion_geometry();

    // through the frame files, so numbers match the CLI on the same seeds
    const GenConfig tg;
    GenConfig hg;
    hg.seed = kHeldoutSeed;
    hg.scenes = kHeldoutScenes;
    hg.frames_per_scene = kHeldoutFramesPerScene;
    write_dataset(work / "train", generate_frames(tg), tg.class_count, tg.seed);
    write_dataset(work / "heldout", generate_frames(hg), hg.class_count, hg.seed);
    const std::vector<RgbdFrame> train = read_dataset(work / "train").frames;
    const std::vector<RgbdFrame> heldout = read_dataset(work / "heldout").frames;
    note("data: " + std::to_string(train.size()) + " training frames (seed 7), " + std::to_string(heldout.size()) +
         " held-out frames (seed " + std::to_string(kHeldoutSeed) + ")");

    const TrainConfig tcfg;
    const Clock teacher_clock;
    const TrainResult teacher = pretrain_teacher(train, tcfg);
    const double teacher_secs = teacher_clock.seconds();
    note("teacher: " + std::to_string(tcfg.steps) + " steps, final loss " + num(teacher.metrics.back().loss_mean) + ", " +
         num(teacher_secs, 1) + " s");
    criterion_diversity(heldout, teacher.params);

    std::string det;
    const bool det_ok = determinism_and_formats(work / "det", det);
    const double fast_secs = fast_clock.seconds();

    double training_secs = 0.0;
    if (!fast_only) {
      const Clock training_clock;
      TrainConfig cfg;  // reference run: defaults, seed 3
      const ModelConfig model = cfg.model;

      // 4
      const Clock ref_clock;
      const ParamStore init = init_pretrain_params(teacher.params, cfg);
      Rng chance_rng(5, 3);
      const RetrievalResult chance = retrieval_top1(heldout, init, model, kRetrievalPairs, chance_rng);
      const auto [lo, hi] = binomial_interval(chance.anchors, 1.0 / kRetrievalPairs, kChanceConfidence);
      const TrainResult ref = pretrain(train, teacher.params, cfg, "ppnce");
      Rng ret_rng(5, 3);
      const RetrievalResult ret = retrieval_top1(heldout, ref.params, model, kRetrievalPairs, ret_rng);
      const double ref_secs = ref_clock.seconds();
      const bool chance_ok = chance.hits >= lo && chance.hits <= hi;
      double tail_loss = 0.0, tail_pos = 0.0;
      for (std::size_t i = ref.metrics.size() - kTailSteps; i < ref.metrics.size(); ++i) {
        tail_loss += ref.metrics[i].loss_mean / kTailSteps;
        tail_pos += ref.metrics[i].pos_sim_mean / kTailSteps;
      }
      training_run_ok = tail_loss < ref.metrics.front().loss_mean && tail_pos > kPosSimFloor;
      note(std::string("training-run oracle ") + (training_run_ok ? "PASS" : "FAIL") + ": loss_mean " +
           num(ref.metrics.front().loss_mean) + " at step 0, " + num(tail_loss) + " over the last " +
           std::to_string(kTailSteps) + " steps; pos_sim_mean " + num(tail_pos) + " (> " + num(kPosSimFloor, 2) + ")");
      report(4, ret.accuracy >= kRetrievalTarget && chance_ok && ref_secs < kRetrievalSeconds,
             "held-out retrieval_top1 " + num(ret.accuracy) + " (>= " + num(kRetrievalTarget, 2) + "), init " +
                 num(chance.accuracy) + " with " + std::to_string(chance.hits) + " hits in [" + std::to_string(lo) + ", " +
                 std::to_string(hi) + "] of " + std::to_string(chance.anchors) + ", " + num(ref_secs, 1) + " s (< " +
                 num(kRetrievalSeconds, 0) + " s)");

      // 5
      const ParamStore scratch = init_student_params(cfg);
      std::vector<Probed> by_fraction;
      bool all_positive = true;
      for (double f : kFractions) {
        Probed p;
        p.pre = probe(train, heldout, ref.params, model, f).mean_iou;
        p.scratch = probe(train, heldout, scratch, model, f).mean_iou;
        note("fraction " + num(f, 2) + ": pretrained mIoU " + num(p.pre) + ", scratch " + num(p.scratch) + ", gap " +
             signed_num(p.gap()));
        all_positive = all_positive && p.gap() > 0.0;
        by_fraction.push_back(p);
      }
      const double gap_full = by_fraction.front().gap(), gap_small = by_fraction.back().gap();
      report(5, all_positive && gap_small >= gap_full,
             std::string(all_positive ? "pretrained beats scratch at every fraction" : "pretrained does NOT beat scratch everywhere") +
                 ", gap at 0.15 " + signed_num(gap_small) + (gap_small >= gap_full ? " >= " : " < ") + "gap at 1.0 " +
                 signed_num(gap_full));

      // 6
      const double ppnce_iou = by_fraction.front().pre;
      std::vector<std::pair<std::string, double>> ablation;
      for (LossKind kind : {LossKind::ppkd, LossKind::global_l2, LossKind::global_nce}) {
        TrainConfig c = cfg;
        c.loss_kind = kind;
        const TrainResult r = pretrain(train, teacher.params, c, to_string(kind));
        ablation.emplace_back(to_string(kind), probe(train, heldout, r.params, model, 1.0).mean_iou);
      }
      const double ppkd_iou = ablation[0].second;
      std::string raw = "mIoU at fraction 1.0: ppnce " + num(ppnce_iou);
      for (const auto& [name, v] : ablation) raw += ", " + name + " " + num(v);
      std::vector<std::string> inversions;
      if (ppnce_iou < ppkd_iou) inversions.push_back("ppkd > ppnce");
      for (std::size_t i = 1; i < ablation.size(); ++i) {
        if (ppkd_iou < ablation[i].second) inversions.push_back(ablation[i].first + " > ppkd");
        if (ppnce_iou < ablation[i].second) inversions.push_back(ablation[i].first + " > ppnce");
      }
      for (const auto& inv : inversions) note("INVERSION: " + inv);
      report(6, inversions.empty(), raw + (inversions.empty() ? ", ordering holds" : ", ordering inverted"));

      // 7
      TrainConfig sc = cfg;
      sc.model.student_widths = ModelConfig::small_widths();
      const TrainResult small = pretrain(train, teacher.params, sc, "small");
      Probed sp;
      sp.pre = probe(train, heldout, small.params, sc.model, 1.0).mean_iou;
      sp.scratch = probe(train, heldout, init_student_params(sc), sc.model, 1.0).mean_iou;
      report(7, gap_full >= sp.gap(),
             "gap default " + signed_num(gap_full) + " (" + num(by_fraction.front().pre) + " vs " +
                 num(by_fraction.front().scratch) + ") vs gap small " + signed_num(sp.gap()) + " (" + num(sp.pre) + " vs " +
                 num(sp.scratch) + ")");

      training_secs = training_clock.seconds() + teacher_secs;
    }

    const bool time_ok = fast_secs < kFastSeconds && (fast_only || training_secs < kTrainingSeconds);
    std::string timing = "fast items " + num(fast_secs, 1) + " s (< " + num(kFastSeconds, 0) + " s)";
    if (!fast_only) timing += ", training items " + num(training_secs / 60.0, 1) + " min incl. teacher (< 45 min)";
    report(9, det_ok && time_ok, det + "; " + timing);
  } catch (const std::exception& e) {
    std::cout << "acceptance aborted: " << e.what() << std::endl;
    return 2;
  }

  std::sort(verdicts.begin(), verdicts.end(), [](const Verdict& a, const Verdict& b) { return a.id < b.id; });
  std::cout << "\nsummary\n";
  bool all = training_run_ok;
  for (const auto& v : verdicts) {
    std::cout << "  " << v.id << " " << (v.pass ? "PASS" : "FAIL") << '\n';
    all = all && v.pass;
  }
  fs::remove_all(work);
  return all ? 0 : 1;
}
