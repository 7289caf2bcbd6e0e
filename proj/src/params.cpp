#include "ncrf/params.hpp"

#include <cstring>
#include <fstream>

namespace ncrf {

ad::Tensor ParamStore::add(const std::string& name, Mat init) {
  if (index_.count(name)) throw DataError("duplicate parameter: " + name);
  ad::round_to_f32(init);
  Entry e;
  e.name = name;
  e.tensor = ad::leaf(std::move(init));
  index_[name] = entries_.size();
  entries_.push_back(std::move(e));
  return entries_.back().tensor;
}

ad::Tensor ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw DataError("unknown parameter: " + name);
  return entries_[it->second].tensor;
}

bool ParamStore::contains(const std::string& name) const { return index_.count(name) > 0; }

void ParamStore::zero_grads() {
  for (auto& e : entries_) e.tensor->grad.resize(0, 0);
}

void ParamStore::adam_step(const ad::AdamConfig& cfg, const std::vector<std::string>& prefixes) {
  for (auto& e : entries_) {
    if (!prefixes.empty()) {
      bool match = false;
      for (const auto& p : prefixes) match = match || e.name.rfind(p, 0) == 0;
      if (!match) continue;
    }
    ad::adam_step(*e.tensor, e.adam, cfg);
  }
}

void Checkpoint::put(const std::string& name, const Mat& m) { blocks.emplace_back(name, m); }

const Mat* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, m] : blocks)
    if (n == name) return &m;
  return nullptr;
}

Mat Checkpoint::require(const std::string& name) const {
  const Mat* m = find(name);
  if (!m) throw DataError("checkpoint is missing block: " + name);
  return *m;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out.write("NCRF", 4);
  uint32_t version = 1;
  out.write(reinterpret_cast<const char*>(&version), 4);
  for (const auto& [name, m] : ckpt.blocks) {
    uint32_t len = uint32_t(name.size());
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(name.data(), len);
    uint32_t rank = 2;
    out.write(reinterpret_cast<const char*>(&rank), 4);
    uint64_t dims[2] = {uint64_t(m.rows()), uint64_t(m.cols())};
    out.write(reinterpret_cast<const char*>(dims), 16);
    for (int r = 0; r < m.rows(); ++r)
      for (int c = 0; c < m.cols(); ++c) {
        float f = float(m(r, c));
        out.write(reinterpret_cast<const char*>(&f), 4);
      }
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "NCRF", 4) != 0)
    throw DataError("bad checkpoint magic: " + path);
  uint32_t version;
  in.read(reinterpret_cast<char*>(&version), 4);
  if (version != 1)
    throw DataError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
  Checkpoint ckpt;
  while (true) {
    uint32_t len;
    in.read(reinterpret_cast<char*>(&len), 4);
    if (in.gcount() == 0) break;
    if (in.gcount() != 4) throw DataError("truncated checkpoint: " + path);
    std::string name(len, '\0');
    in.read(name.data(), len);
    uint32_t rank;
    in.read(reinterpret_cast<char*>(&rank), 4);
    if (rank != 2) throw DataError("unsupported block rank in " + path);
    uint64_t dims[2];
    in.read(reinterpret_cast<char*>(dims), 16);
    Mat m(dims[0], dims[1]);
    for (uint64_t r = 0; r < dims[0]; ++r)
      for (uint64_t c = 0; c < dims[1]; ++c) {
        float f;
        in.read(reinterpret_cast<char*>(&f), 4);
        m(r, c) = f;
      }
    if (!in) throw DataError("truncated checkpoint: " + path);
    ckpt.blocks.emplace_back(std::move(name), std::move(m));
  }
  return ckpt;
}

void store_to_checkpoint(const ParamStore& store, Checkpoint& ckpt) {
  for (const auto& e : store.entries()) {
    ckpt.put(e.name, e.tensor->val);
    if (e.adam.m.size() > 0) {
      ckpt.put("opt.m:" + e.name, e.adam.m);
      ckpt.put("opt.v:" + e.name, e.adam.v);
      Mat step(1, 1);
      step(0, 0) = e.adam.step;
      ckpt.put("opt.t:" + e.name, step);
    }
  }
}

void store_from_checkpoint(ParamStore& store, const Checkpoint& ckpt) {
  for (auto& e : store.entries()) {
    Mat v = ckpt.require(e.name);
    if (v.rows() != e.tensor->val.rows() || v.cols() != e.tensor->val.cols())
      throw DataError("checkpoint shape mismatch for " + e.name);
    e.tensor->val = std::move(v);
    if (const Mat* m = ckpt.find("opt.m:" + e.name)) {
      e.adam.m = *m;
      e.adam.v = ckpt.require("opt.v:" + e.name);
      e.adam.step = int(ckpt.require("opt.t:" + e.name)(0, 0));
    }
  }
}

}  // namespace ncrf
