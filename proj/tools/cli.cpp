#include "cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "ppkt/evalkit.hpp"
#include "ppkt/ops.hpp"
#include "ppkt/trainer.hpp"

namespace ppkt {
namespace {

// One flag per TrainConfig/ModelConfig field; values are applied on top of
// --config in declaration order.
class TrainFlags {
 public:
  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path_, "key=value file applied before the flags below");
    std::istringstream defaults(config_text(TrainConfig{}));
    std::string line;
    while (std::getline(defaults, line)) {
      const auto eq = line.find('=');
      const std::string key = line.substr(0, eq);
      std::string flag = "--" + key;
      for (char& c : flag) c = c == '_' ? '-' : c;
      if (key == "loss_kind") flag = "--loss," + flag;
      auto& slot = values_[key];
      auto* opt = cmd->add_option(flag, slot, "config field " + key)->default_str(line.substr(eq + 1));
      order_.emplace_back(key, opt);
    }
  }

  TrainConfig resolve() const {
    TrainConfig cfg;
    if (!config_path_.empty()) load_config_file(config_path_, cfg);
    for (const auto& [key, opt] : order_) {
      if (opt->count() > 0) apply_setting(cfg, key, values_.at(key));
    }
    cfg.validate();
    return cfg;
  }

 private:
  std::string config_path_;
  std::map<std::string, std::string> values_;
  std::vector<std::pair<std::string, CLI::Option*>> order_;
};

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

ProgressFn progress_printer(std::ostream& out, std::size_t steps) {
  const std::size_t every = std::max<std::size_t>(1, steps / 20);
  return [&out, every, steps](const StepMetrics& m) {
    if (m.step % every == 0 || m.step + 1 == steps) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "step %5zu  lr %.4g  loss_mean %.6f  pos_sim %.4f", m.step, m.lr, m.loss_mean,
                    m.pos_sim_mean);
      out << buf << std::endl;
    }
  };
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Contrastive pixel-to-point knowledge transfer on synthetic RGB-D scenes", "ppkt"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  // gen-data
  GenConfig gen;
  std::string gen_out;
  auto* gen_cmd = app.add_subcommand("gen-data", "render a synthetic RGB-D dataset");
  gen_cmd->add_option("--out", gen_out, "output directory")->required();
  gen_cmd->add_option("--scenes", gen.scenes, "number of scenes");
  gen_cmd->add_option("--frames-per-scene", gen.frames_per_scene, "views rendered per scene");
  gen_cmd->add_option("--seed", gen.seed, "random seed");
  gen_cmd->add_option("--class-count", gen.class_count, "semantic classes (class 0 is the floor)");
  gen_cmd->add_option("--min-boxes", gen.min_boxes, "fewest objects per scene");
  gen_cmd->add_option("--max-boxes", gen.max_boxes, "most objects per scene");
  gen_cmd->add_option("--noise-sigma", gen.noise_sigma, "colour noise standard deviation");

  // pretrain-teacher
  std::string pt_data, pt_out, pt_metrics;
  TrainFlags pt_flags;
  auto* pt_cmd = app.add_subcommand("pretrain-teacher", "supervised pretraining of the 2D teacher");
  pt_cmd->add_option("--data", pt_data, "dataset directory")->required();
  pt_cmd->add_option("--out", pt_out, "teacher checkpoint to write")->required();
  pt_cmd->add_option("--metrics", pt_metrics, "per-step metrics CSV");
  pt_flags.attach(pt_cmd);

  // pretrain
  std::string pr_data, pr_teacher, pr_out, pr_metrics;
  TrainFlags pr_flags;
  auto* pr_cmd = app.add_subcommand("pretrain", "pretrain the 3D student from the frozen teacher");
  pr_cmd->add_option("--data", pr_data, "dataset directory")->required();
  pr_cmd->add_option("--teacher", pr_teacher, "teacher checkpoint")->required();
  pr_cmd->add_option("--out", pr_out, "checkpoint to write (teacher, UPL, student, head)")->required();
  pr_cmd->add_option("--metrics", pr_metrics, "per-step metrics CSV");
  pr_flags.attach(pr_cmd);

  // gradcheck
  std::string gc_loss = "ppnce";
  std::uint64_t gc_seed = 1;
  std::size_t gc_samples = 200;
  double gc_step = 1e-5;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of the whole pipeline at tiny widths");
  gc_cmd->add_option("--loss", gc_loss, "ppnce, ppkd, global_l2 or global_nce");
  gc_cmd->add_option("--seed", gc_seed, "random seed");
  gc_cmd->add_option("--samples", gc_samples, "parameters probed");
  gc_cmd->add_option("--step", gc_step, "central difference step");

  // eval-retrieval
  std::string ev_data, ev_ckpt, ev_metrics;
  std::size_t ev_pairs = 256;
  std::uint64_t ev_seed = 5;
  auto* ev_cmd = app.add_subcommand("eval-retrieval", "top-1 pixel retrieval from point anchors");
  ev_cmd->add_option("--data", ev_data, "held-out dataset directory")->required();
  ev_cmd->add_option("--checkpoint", ev_ckpt, "pretrain checkpoint")->required();
  ev_cmd->add_option("--pairs", ev_pairs, "pairs M per frame");
  ev_cmd->add_option("--seed", ev_seed, "random seed");
  ev_cmd->add_option("--metrics", ev_metrics, "metrics rows CSV");

  // probe
  std::string pb_train, pb_heldout, pb_ckpt = "none", pb_metrics, pb_embeddings;
  ProbeConfig pb;
  TrainFlags pb_flags;
  auto* pb_cmd = app.add_subcommand("probe", "linear probe of point segmentation on backbone features");
  pb_cmd->add_option("--train-data", pb_train, "labelled training dataset directory")->required();
  pb_cmd->add_option("--heldout-data", pb_heldout, "held-out dataset directory")->required();
  pb_cmd->add_option("--checkpoint", pb_ckpt, "student checkpoint, or none for the scratch baseline");
  pb_cmd->add_option("--labeled-fraction", pb.labeled_fraction, "fraction of training frames with labels");
  pb_cmd->add_option("--probe-steps", pb.steps, "classifier optimisation steps");
  pb_cmd->add_option("--probe-lr", pb.lr, "classifier learning rate");
  pb_cmd->add_option("--probe-momentum", pb.momentum, "classifier momentum");
  pb_cmd->add_option("--probe-weight-decay", pb.weight_decay, "classifier weight decay");
  pb_cmd->add_option("--points-per-frame", pb.points_per_frame, "labelled points sampled per frame");
  pb_cmd->add_option("--probe-seed", pb.seed, "sampling seed of the probe");
  pb_cmd->add_flag("--finetune", pb.finetune, "train the backbone together with the classifier");
  pb_cmd->add_option("--metrics", pb_metrics, "metrics rows CSV");
  pb_cmd->add_option("--embeddings", pb_embeddings, "held-out backbone features with labels, CSV");
  pb_flags.attach(pb_cmd);

  // diversity
  std::string dv_data, dv_teacher, dv_metrics;
  std::size_t dv_samples = 1000;
  std::uint64_t dv_seed = 5;
  auto* dv_cmd = app.add_subcommand("diversity", "mean pairwise cosine of global versus pixel teacher features");
  dv_cmd->add_option("--data", dv_data, "dataset directory")->required();
  dv_cmd->add_option("--teacher", dv_teacher, "teacher or pretrain checkpoint")->required();
  dv_cmd->add_option("--samples", dv_samples, "pixel embeddings sampled");
  dv_cmd->add_option("--seed", dv_seed, "random seed");
  dv_cmd->add_option("--metrics", dv_metrics, "metrics rows CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    const Timer timer;
    if (*gen_cmd) {
      const auto frames = generate_frames(gen);
      write_dataset(gen_out, frames, gen.class_count, gen.seed);
      out << "wrote " << frames.size() << " frames to " << gen_out << '\n';
    } else if (*pt_cmd) {
      const TrainConfig cfg = pt_flags.resolve();
      const Dataset data = read_dataset(pt_data);
      if (data.class_count != cfg.model.class_count) {
        throw std::invalid_argument("dataset has " + std::to_string(data.class_count) +
                                    " classes but class_count is " + std::to_string(cfg.model.class_count));
      }
      const TrainResult r = pretrain_teacher(data.frames, cfg, progress_printer(out, cfg.steps));
      save_checkpoint(pt_out, r.params, cfg.steps);
      if (!pt_metrics.empty()) write_metrics_csv(pt_metrics, r.metrics);
    } else if (*pr_cmd) {
      TrainConfig cfg = pr_flags.resolve();
      const Dataset data = read_dataset(pr_data);
      const Checkpoint teacher = load_checkpoint(pr_teacher);
      const ModelConfig tm = infer_model(teacher.params, cfg.model);
      cfg.model.teacher_channels = tm.teacher_channels;
      cfg.model.class_count = tm.class_count;
      const TrainResult r = run_pretrain(data.frames, teacher.params, cfg, progress_printer(out, cfg.steps));
      save_checkpoint(pr_out, r.params, cfg.steps);
      if (!pr_metrics.empty()) write_metrics_csv(pr_metrics, r.metrics);
    } else if (*gc_cmd) {
      const GradCheckReport rep = pipeline_grad_check(parse_loss_kind(gc_loss), gc_seed, gc_samples, gc_step);
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.3e", rep.max_rel_error);
      out << "loss " << gc_loss << ": max relative error " << buf << " over " << rep.probes << " probes (worst "
          << rep.worst_param << "[" << rep.worst_index << "])\n";
      if (!(rep.max_rel_error < 1e-4)) return 2;
    } else if (*ev_cmd) {
      const Dataset data = read_dataset(ev_data);
      const Checkpoint ck = load_checkpoint(ev_ckpt);
      const ModelConfig model = infer_model(ck.params);
      Rng rng(ev_seed, 3);
      const RetrievalResult r = retrieval_top1(data.frames, ck.params, model, ev_pairs, rng);
      out << "retrieval_top1 " << fmt(r.accuracy) << " over " << r.frames_used << " frames (" << r.frames_skipped
          << " skipped), chance " << fmt(1.0 / static_cast<double>(ev_pairs)) << '\n';
      if (!ev_metrics.empty()) {
        export_metrics(ev_metrics, {{"retrieval_top1", "held-out", r.accuracy, "pairs=" + std::to_string(ev_pairs)}});
      }
    } else if (*pb_cmd) {
      const TrainConfig cfg = pb_flags.resolve();
      const Dataset train = read_dataset(pb_train);
      const Dataset heldout = read_dataset(pb_heldout);
      ParamStore params;
      ModelConfig model = cfg.model;
      if (pb_ckpt == "none") {
        params = init_student_params(cfg);
      } else {
        params = load_checkpoint(pb_ckpt).params;
        model = infer_model(params, cfg.model);
      }
      model.class_count = train.class_count;
      const ProbeReport rep = linear_probe(train.frames, heldout.frames, params, model, pb);
      out << "probe (" << (pb_ckpt == "none" ? "scratch" : pb_ckpt) << ", fraction " << pb.labeled_fraction
          << "): mean_acc " << fmt(rep.mean_acc) << "  mean_iou " << fmt(rep.mean_iou) << "  overall_acc "
          << fmt(rep.overall_acc) << '\n';
      for (int c : rep.flagged) out << "  class " << c << " absent from the training split; excluded\n";
      if (!pb_metrics.empty()) {
        std::ostringstream ctx;
        ctx << "checkpoint=" << pb_ckpt << ";fraction=" << pb.labeled_fraction;
        export_metrics(pb_metrics, probe_rows(rep, ctx.str()));
      }
      if (!pb_embeddings.empty()) {
        Rng rng(pb.seed, 2);
        const PointSet pts = backbone_points(heldout.frames, params, model, pb.points_per_frame, rng);
        export_embeddings(pb_embeddings, pts.features, pts.labels);
      }
    } else if (*dv_cmd) {
      const Dataset data = read_dataset(dv_data);
      const Checkpoint ck = load_checkpoint(dv_teacher);
      Rng rng(dv_seed, 4);
      const DiversityResult r = feature_diversity(data.frames, ck.params, dv_samples, rng);
      out << "global_mean_cos " << fmt(r.global_mean_cos) << "  pixel_mean_cos " << fmt(r.pixel_mean_cos) << '\n';
      if (!dv_metrics.empty()) {
        const std::string ctx = "frames=" + std::to_string(data.frames.size());
        export_metrics(dv_metrics, {{"global_mean_cos", "held-out", r.global_mean_cos, ctx},
                                    {"pixel_mean_cos", "held-out", r.pixel_mean_cos, ctx}});
      }
    }
    out << "done in " << fmt(timer.seconds()) << " s\n";
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace ppkt
