#pragma once

#include <cstddef>
#include <deque>
#include <string>
#include <string_view>
#include <unordered_map>

#include "ppkt/dense_array.hpp"

namespace ppkt {

struct Param {
  std::string name;
  DenseArray value;
  DenseArray grad;
  bool trainable = true;
};

/// Named trainable arrays with matching gradient slots. Iteration follows
/// insertion order; references returned by add()/get() stay valid for the
/// store's lifetime.
class ParamStore {
 public:
  Param& add(std::string name, DenseArray value, bool trainable = true);

  bool contains(std::string_view name) const;
  Param& get(std::string_view name);
  const Param& get(std::string_view name) const;
  DenseArray& value(std::string_view name) { return get(name).value; }
  const DenseArray& value(std::string_view name) const { return get(name).value; }
  DenseArray& grad(std::string_view name) { return get(name).grad; }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad();
  /// Sets the trainable flag of every parameter whose name starts with prefix.
  void set_trainable(std::string_view prefix, bool trainable);
  /// Copies every entry of other whose name starts with prefix (replacing values
  /// of existing entries after a shape check).
  void merge_from(const ParamStore& other, std::string_view prefix = "");
  std::size_t scalar_count() const;

 private:
  std::deque<Param> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace ppkt
