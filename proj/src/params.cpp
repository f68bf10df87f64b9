#include "dsdpg/params.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace dsdpg {

namespace {
constexpr char kMagic[8] = {'D', 'S', 'P', 'G', 'C', 'K', '0', '1'};

template <typename T>
void write_pod(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}
}  // namespace

void ParamStore::add(const std::string& name, Tensor t) {
  if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate name " + name);
  index_[name] = entries_.size();
  entries_.push_back({name, std::move(t)});
}

bool ParamStore::has(const std::string& name) const { return index_.count(name) > 0; }

Tensor& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("ParamStore: no parameter " + name);
  return entries_[it->second].value;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("ParamStore: no parameter " + name);
  return entries_[it->second].value;
}

std::vector<double> ParamStore::flat() const {
  std::vector<double> v;
  v.reserve(flat_size());
  for (const auto& e : entries_)
    v.insert(v.end(), e.value.data(), e.value.data() + e.value.size());
  return v;
}

void ParamStore::set_flat(const std::vector<double>& v) {
  if (v.size() != flat_size()) throw std::invalid_argument("set_flat: size mismatch");
  std::size_t off = 0;
  for (auto& e : entries_) {
    std::memcpy(e.value.data(), v.data() + off, e.value.size() * sizeof(double));
    off += e.value.size();
  }
}

std::size_t ParamStore::flat_size() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

void ParamStore::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path);
  os.write(kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(os, 1);  // version
  write_pod<std::uint64_t>(os, entries_.size());
  for (const auto& e : entries_) {
    write_pod<std::uint16_t>(os, static_cast<std::uint16_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    write_pod<std::uint64_t>(os, e.value.rows());
    write_pod<std::uint64_t>(os, e.value.cols());
    os.write(reinterpret_cast<const char*>(e.value.data()),
             static_cast<std::streamsize>(e.value.size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

ParamStore ParamStore::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const auto version = read_pod<std::uint32_t>(is);
  if (version != 1) throw std::runtime_error("checkpoint: unsupported version");
  const auto count = read_pod<std::uint64_t>(is);
  ParamStore s;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = read_pod<std::uint16_t>(is);
    std::string name(len, '\0');
    is.read(name.data(), len);
    const auto rows = read_pod<std::uint64_t>(is);
    const auto cols = read_pod<std::uint64_t>(is);
    Tensor t(rows, cols);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint: truncated tensor data");
    s.add(name, std::move(t));
  }
  return s;
}

int ParamBinding::leaf(const std::string& name) {
  auto it = by_name_.find(name);
  if (it != by_name_.end()) return it->second;
  int id = tape_->leaf(store_->get(name));
  by_name_[name] = id;
  ids_.push_back(id);
  names_.push_back(name);
  return id;
}

std::map<std::string, Tensor> backward(ad::Tape& tape, int loss, ParamBinding& binding) {
  if (tape.val(loss).size() != 1) throw ad::TapeError("backward: loss must be scalar");
  const auto grads = tape.gradients(loss, binding.leaf_ids());
  std::map<std::string, Tensor> out;
  for (std::size_t i = 0; i < grads.size(); ++i)
    out[binding.leaf_names()[i]] = tape.val(grads[i]);
  // parameters never bound into this tape have zero gradient
  const ParamStore& s = binding.store();
  for (std::size_t i = 0; i < s.count(); ++i)
    if (!out.count(s.name_at(i)))
      out[s.name_at(i)] = Tensor(s.tensor_at(i).rows(), s.tensor_at(i).cols());
  return out;
}

}  // namespace dsdpg
