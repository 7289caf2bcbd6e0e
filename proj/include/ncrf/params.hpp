#pragma once

#include <map>
#include <string>
#include <vector>

#include "ncrf/ad.hpp"

namespace ncrf {

// Named learnable tensors plus their Adam moments. Registration order is the
// serialization order, which keeps checkpoints and update sweeps
// deterministic.
class ParamStore {
 public:
  ad::Tensor add(const std::string& name, Mat init);
  ad::Tensor get(const std::string& name) const;
  bool contains(const std::string& name) const;

  void zero_grads();
  // Updates every parameter whose name starts with one of the prefixes
  // (empty list means all). Values and moments are f32-rounded afterwards.
  void adam_step(const ad::AdamConfig& cfg, const std::vector<std::string>& prefixes = {});

  struct Entry {
    std::string name;
    ad::Tensor tensor;
    ad::AdamState adam;
  };
  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, size_t> index_;
};

// Checkpoint container: "NCRF" magic, u32 version, then named blocks of
// (u32 name length, name bytes, u32 rank, rank x u64 dims, f32 data,
// little-endian, row-major).
struct Checkpoint {
  std::vector<std::pair<std::string, Mat>> blocks;

  void put(const std::string& name, const Mat& m);
  const Mat* find(const std::string& name) const;
  Mat require(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Store <-> checkpoint, including "opt.m:"/"opt.v:" moment blocks.
void store_to_checkpoint(const ParamStore& store, Checkpoint& ckpt);
void store_from_checkpoint(ParamStore& store, const Checkpoint& ckpt);

}  // namespace ncrf
