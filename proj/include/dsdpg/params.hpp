#pragma once

#include <map>
#include <string>
#include <vector>

#include "dsdpg/tape.hpp"
#include "dsdpg/tensor.hpp"

namespace dsdpg {

// Named parameter tensors with a deterministic (insertion) order. The flat
// view concatenates all tensors in that order and round-trips losslessly.
class ParamStore {
 public:
  void add(const std::string& name, Tensor t);
  bool has(const std::string& name) const;
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;

  std::size_t count() const { return entries_.size(); }
  const std::string& name_at(std::size_t i) const { return entries_[i].name; }
  Tensor& tensor_at(std::size_t i) { return entries_[i].value; }
  const Tensor& tensor_at(std::size_t i) const { return entries_[i].value; }

  std::vector<double> flat() const;
  void set_flat(const std::vector<double>& v);
  std::size_t flat_size() const;

  // Versioned checkpoint: header, then (name, shape, little-endian f64 data)
  // records.
  void save(const std::string& path) const;
  static ParamStore load(const std::string& path);

 private:
  struct Entry {
    std::string name;
    Tensor value;
  };
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

// Binds a store's tensors onto a tape as leaves (one leaf per parameter,
// created lazily) so a single reverse sweep yields all parameter gradients.
class ParamBinding {
 public:
  ParamBinding(ad::Tape& tape, const ParamStore& store) : tape_(&tape), store_(&store) {}

  int leaf(const std::string& name);
  const std::vector<int>& leaf_ids() const { return ids_; }
  const std::vector<std::string>& leaf_names() const { return names_; }
  ad::Tape& tape() { return *tape_; }
  const ParamStore& store() const { return *store_; }

 private:
  ad::Tape* tape_;
  const ParamStore* store_;
  std::vector<int> ids_;
  std::vector<std::string> names_;
  std::map<std::string, int> by_name_;
};

// ∂loss/∂p for every parameter bound through `binding`; parameters the loss
// never touched get zero gradients.
std::map<std::string, Tensor> backward(ad::Tape& tape, int loss, ParamBinding& binding);

}  // namespace dsdpg
