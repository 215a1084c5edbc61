#include "ppkt/param_store.hpp"

#include <stdexcept>

namespace ppkt {

Param& ParamStore::add(std::string name, DenseArray value, bool trainable) {
  if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
  index_.emplace(name, entries_.size());
  DenseArray grad = DenseArray::zeros_like(value);
  entries_.push_back(Param{std::move(name), std::move(value), std::move(grad), trainable});
  return entries_.back();
}

bool ParamStore::contains(std::string_view name) const { return index_.count(std::string(name)) > 0; }

Param& ParamStore::get(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("ParamStore: no parameter '" + std::string(name) + "'");
  return entries_[it->second];
}

const Param& ParamStore::get(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("ParamStore: no parameter '" + std::string(name) + "'");
  return entries_[it->second];
}

void ParamStore::zero_grad() {
  for (auto& p : entries_) p.grad.fill(0.0);
}

void ParamStore::set_trainable(std::string_view prefix, bool trainable) {
  for (auto& p : entries_) {
    if (p.name.starts_with(prefix)) p.trainable = trainable;
  }
}

void ParamStore::merge_from(const ParamStore& other, std::string_view prefix) {
  for (const auto& p : other) {
    if (!p.name.starts_with(prefix)) continue;
    if (contains(p.name)) {
      Param& mine = get(p.name);
      if (mine.value.shape() != p.value.shape()) {
        throw ShapeError("parameter '" + p.name + "': shape " + shape_str(mine.value.shape()) +
                         " cannot take " + shape_str(p.value.shape()));
      }
      mine.value = p.value;
    } else {
      add(p.name, p.value, p.trainable);
    }
  }
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : entries_) n += p.value.size();
  return n;
}

}  // namespace ppkt
