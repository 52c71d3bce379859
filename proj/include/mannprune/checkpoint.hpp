// Versioned binary checkpoint. Byte layout is described in docs/checkpoint-format.md.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include "mannprune/network.hpp"
#include "mannprune/optimizer.hpp"
#include "mannprune/pruning.hpp"
#include "mannprune/training.hpp"

namespace mannprune {

inline constexpr char kCheckpointMagic[8] = {'M', 'A', 'N', 'N', 'P', 'R', 'U', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum CheckpointFlags : std::uint32_t { kHasMasks = 1u, kHasTrainState = 2u };

struct Checkpoint {
  std::uint64_t seed = 0;
  MoENetwork<float> net;
  std::optional<PruneState> prune;
  std::optional<TrainState> train;
};

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  void floats(const std::vector<float>& v) {
    for (float x : v) f32(x);
  }
  std::vector<std::uint8_t>& bytes() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& b) : b_(b) {}

  std::uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  void raw(char* out, std::size_t n) {
    need(n);
    std::memcpy(out, b_.data() + pos_, n);
    pos_ += n;
  }
  void floats(std::vector<float>& v, std::size_t n) {
    need(4 * n);
    v.resize(n);
    for (float& x : v) x = f32();
  }
  std::size_t count(std::size_t limit, const char* what) {
    const std::uint64_t n = u64();
    if (n > limit) throw IoError(std::string("checkpoint: implausible ") + what + " " + std::to_string(n));
    return static_cast<std::size_t>(n);
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw IoError("checkpoint: truncated at byte " + std::to_string(pos_));
  }
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

inline void write_tensors(ByteWriter& w, const std::vector<Matrix<float>>& ts) {
  for (const auto& t : ts) w.floats(t.data);
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck) {
  const auto& net = ck.net;
  const auto& c = net.config;
  detail::ByteWriter w;
  w.raw(kCheckpointMagic, 8);
  w.u32(kCheckpointVersion);
  w.u32((ck.prune ? kHasMasks : 0u) | (ck.train ? kHasTrainState : 0u));
  w.u64(ck.seed);

  w.u64(c.d_in);
  w.u64(c.d_out);
  w.u64(c.h_size);
  w.u64(c.n_experts);
  w.u64(c.g_hidden);
  w.f64(c.dropout_retention);
  w.u64(c.gating_indices.size());
  for (auto idx : c.gating_indices) w.u64(idx);

  w.floats(net.norm.in_mean);
  w.floats(net.norm.in_std);
  w.floats(net.norm.out_mean);
  w.floats(net.norm.out_std);

  for (std::size_t id = 0; id < net.tensor_count(); ++id) w.floats(net.tensor(id).data);

  if (ck.prune) {
    const auto& p = *ck.prune;
    w.f64(p.config.target_sparsity);
    w.u8(static_cast<std::uint8_t>(p.config.scope));
    w.u8(static_cast<std::uint8_t>(p.config.schedule));
    w.u8(p.config.include_biases ? 1 : 0);
    w.u8(p.config.include_gating ? 1 : 0);
    w.f64(p.config.ramp_end);
    w.u64(p.config.mask_update_interval);
    w.u64(p.step);
    for (std::size_t id = 0; id < net.tensor_count(); ++id) {
      const auto& keep = p.masks.keep[id];
      w.u8(keep.empty() ? 0 : 1);
      std::vector<std::uint8_t> bits((keep.size() + 7) / 8, 0);
      for (std::size_t k = 0; k < keep.size(); ++k)
        if (keep[k]) bits[k / 8] |= static_cast<std::uint8_t>(1u << (k % 8));
      for (auto b : bits) w.u8(b);
    }
    w.u64(p.history.size());
    for (const auto& e : p.history) {
      w.u64(e.step);
      w.f64(e.tau);
      w.f64(e.target);
      w.f64(e.achieved);
    }
  }

  if (ck.train) {
    const auto& t = *ck.train;
    w.u64(t.epochs_done);
    w.u64(t.optimizer.step);
    w.f64(t.optimizer.annealing);
    detail::write_tensors(w, t.optimizer.m);
    detail::write_tensors(w, t.optimizer.v);
  }
  return std::move(w.bytes());
}

inline Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r(bytes);
  char magic[8];
  r.raw(magic, 8);
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0) throw IoError("checkpoint: bad magic (not a checkpoint file)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw IoError("checkpoint: unsupported version (expected " + std::to_string(kCheckpointVersion) + ", found " +
                  std::to_string(version) + ")");
  const std::uint32_t flags = r.u32();
  Checkpoint ck;
  ck.seed = r.u64();

  constexpr std::size_t kDimLimit = std::size_t{1} << 24;
  NetworkConfig c;
  c.d_in = r.count(kDimLimit, "d_in");
  c.d_out = r.count(kDimLimit, "d_out");
  c.h_size = r.count(kDimLimit, "h_size");
  c.n_experts = r.count(1 << 16, "n_experts");
  c.g_hidden = r.count(kDimLimit, "g_hidden");
  c.dropout_retention = r.f64();
  c.gating_indices.resize(r.count(kDimLimit, "gating index count"));
  for (auto& idx : c.gating_indices) idx = r.u64();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw IoError(std::string("checkpoint: stored config invalid: ") + e.what());
  }

  auto& net = ck.net;
  net.config = c;
  net.gating = make_param_set<float>(c.gating_indices.size(), c.g_hidden, c.g_hidden, c.n_experts);
  net.experts.assign(c.n_experts, make_param_set<float>(c.d_in, c.h_size, c.h_size, c.d_out));
  r.floats(net.norm.in_mean, c.d_in);
  r.floats(net.norm.in_std, c.d_in);
  r.floats(net.norm.out_mean, c.d_out);
  r.floats(net.norm.out_std, c.d_out);
  for (std::size_t id = 0; id < net.tensor_count(); ++id) {
    auto& t = net.tensor(id);
    r.floats(t.data, t.size());
  }

  if (flags & kHasMasks) {
    PruneState p;
    p.config.target_sparsity = r.f64();
    const auto scope = r.u8(), schedule = r.u8();
    if (scope > 1 || schedule > 1) throw IoError("checkpoint: unknown prune scope/schedule code");
    p.config.scope = static_cast<PruneScope>(scope);
    p.config.schedule = static_cast<PruneSchedule>(schedule);
    p.config.include_biases = r.u8() != 0;
    p.config.include_gating = r.u8() != 0;
    p.config.ramp_end = r.f64();
    p.config.mask_update_interval = static_cast<std::size_t>(r.u64());
    p.step = r.u64();
    p.masks.keep.resize(net.tensor_count());
    for (std::size_t id = 0; id < net.tensor_count(); ++id) {
      if (r.u8() == 0) continue;
      const std::size_t n = net.tensor(id).size();
      auto& keep = p.masks.keep[id];
      keep.assign(n, 0);
      for (std::size_t byte = 0; byte < (n + 7) / 8; ++byte) {
        const std::uint8_t b = r.u8();
        for (std::size_t bit = 0; bit < 8 && byte * 8 + bit < n; ++bit) keep[byte * 8 + bit] = (b >> bit) & 1u;
      }
    }
    p.history.resize(r.count(std::size_t{1} << 32, "mask event count"));
    for (auto& e : p.history) {
      e.step = r.u64();
      e.tau = r.f64();
      e.target = r.f64();
      e.achieved = r.f64();
    }
    p.total_prunable = mask_total(p.masks);
    p.refresh_sparsity();
    ck.prune = std::move(p);
  }

  if (flags & kHasTrainState) {
    TrainState t;
    t.epochs_done = static_cast<std::size_t>(r.u64());
    t.optimizer.step = r.u64();
    t.optimizer.annealing = r.f64();
    t.optimizer.m = zeros_like(net);
    t.optimizer.v = zeros_like(net);
    for (auto& m : t.optimizer.m) r.floats(m.data, m.size());
    for (auto& v : t.optimizer.v) r.floats(v.data, v.size());
    ck.train = std::move(t);
  }
  if (!r.done()) throw IoError("checkpoint: trailing bytes after last section");
  return ck;
}

inline void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) { write_bytes(path, serialize_checkpoint(ck)); }

inline Checkpoint load_checkpoint(const std::string& path) { return deserialize_checkpoint(read_bytes(path)); }

}  // namespace mannprune
