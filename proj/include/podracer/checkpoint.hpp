#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "podracer/artifact.hpp"
#include "podracer/common.hpp"

namespace podracer {

// ---------------------------------------------------------------------------
// Checkpoint file format (version 1), all integers little-endian:
//
//   magic        8 bytes  "PODRCKPT"
//   version      u32
//   tensor count u32
//   per tensor:
//     name length  u32
//     name bytes   (no terminator; names unique within a file)
//     rank         u32
//     dims         rank x u64
//     payload      prod(dims) x f64 (IEEE-754 bit pattern)
//   crc32        u32 over every preceding byte (IEEE reflected polynomial)
//
// Readers verify the CRC before interpreting anything, so any byte-level
// corruption surfaces as CorruptionError rather than a wrong artifact.
// ---------------------------------------------------------------------------

constexpr std::array<char, 8> kCheckpointMagic = {'P', 'O', 'D', 'R', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

inline std::uint32_t crc32_ieee(const std::uint8_t* data, std::size_t len,
                                std::uint32_t seed = 0xFFFFFFFFu) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? (0xEDB88320u ^ (c >> 1)) : (c >> 1);
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = seed;
  for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<double> values;
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFFu));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFFu));
}

inline void put_f64(std::vector<std::uint8_t>& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u64(out, bits);
}

class ByteReader {
public:
  ByteReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }

  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return size_ - pos_; }

private:
  void need(std::size_t n) const {
    if (pos_ + n > size_) throw CorruptionError("checkpoint: truncated record");
  }
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kCheckpointMagic.begin(), kCheckpointMagic.end());
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    detail::put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    detail::put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
    std::uint64_t count = 1;
    for (std::uint64_t d : t.dims) {
      detail::put_u64(out, d);
      count *= d;
    }
    if (count != t.values.size()) {
      throw UsageError("encode_checkpoint: tensor '" + t.name + "' dims product " +
                       std::to_string(count) + " vs " + std::to_string(t.values.size()) + " values");
    }
    for (double v : t.values) detail::put_f64(out, v);
  }
  detail::put_u32(out, crc32_ieee(out.data(), out.size()));
  return out;
}

inline std::vector<NamedTensor> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kCheckpointMagic.size() + 12) {
    throw CorruptionError("checkpoint: file too short");
  }
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[body + i]) << (8 * i);
  if (crc32_ieee(bytes.data(), body) != stored) {
    throw CorruptionError("checkpoint: CRC mismatch");
  }
  detail::ByteReader r(bytes.data(), body);
  if (r.bytes(kCheckpointMagic.size()) !=
      std::string(kCheckpointMagic.data(), kCheckpointMagic.size())) {
    throw FormatError("checkpoint: bad magic, not a checkpoint file");
  }
  const std::uint32_t version = r.u32();
  if (version == 0 || version > kCheckpointVersion) {
    throw VersionError("checkpoint: version " + std::to_string(version) + " not supported (max " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint32_t count = r.u32();
  std::vector<NamedTensor> tensors;
  std::map<std::string, bool> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const std::uint32_t name_len = r.u32();
    t.name = r.bytes(name_len);
    if (seen.count(t.name)) throw CorruptionError("checkpoint: duplicate tensor '" + t.name + "'");
    seen[t.name] = true;
    const std::uint32_t rank = r.u32();
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      t.dims.push_back(r.u64());
      n *= t.dims.back();
    }
    if (n > (1ULL << 32)) throw CorruptionError("checkpoint: implausible tensor size");
    t.values.resize(n);
    for (std::uint64_t k = 0; k < n; ++k) t.values[k] = r.f64();
    tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0) throw CorruptionError("checkpoint: trailing bytes after tensor table");
  return tensors;
}

// ---------------------------------------------------------------------------
// Artifact <-> tensor table mapping.
// ---------------------------------------------------------------------------

/// Optional run metadata carried alongside an artifact.
struct CheckpointMeta {
  double wall_seconds = 0.0;
  double env_steps = 0.0;
  double score = 0.0;
};

inline std::vector<NamedTensor> artifact_to_tensors(const AgentArtifact& a,
                                                    const CheckpointMeta* meta = nullptr) {
  std::vector<NamedTensor> ts;
  auto add = [&](std::string name, std::vector<std::uint64_t> dims, std::vector<double> values) {
    ts.push_back(NamedTensor{std::move(name), std::move(dims), std::move(values)});
  };
  auto add_mlp = [&](const std::string& prefix, const MlpParams& mlp) {
    for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
      const MlpLayer& l = mlp.layers[i];
      add(prefix + "/layer" + std::to_string(i) + "/weight",
          {static_cast<std::uint64_t>(l.weight.rows), static_cast<std::uint64_t>(l.weight.cols)},
          l.weight.data);
      add(prefix + "/layer" + std::to_string(i) + "/bias",
          {static_cast<std::uint64_t>(l.bias.size())}, l.bias);
    }
  };
  add_mlp("actor", a.actor.mean_net);
  add("actor/log_std", {static_cast<std::uint64_t>(a.actor.log_std.size())}, a.actor.log_std);
  add_mlp("critic", a.critic);
  add("optim/m", {static_cast<std::uint64_t>(a.optimizer.m.size())}, a.optimizer.m);
  add("optim/v", {static_cast<std::uint64_t>(a.optimizer.v.size())}, a.optimizer.v);
  add("optim/scalars", {5},
      {static_cast<double>(a.optimizer.t), a.optimizer.beta1, a.optimizer.beta2, a.optimizer.eps,
       a.optimizer.lr});
  // mutation_seed split into 32-bit halves so the u64 survives the f64 payload.
  add("lineage", {3},
      {static_cast<double>(a.lineage.parent_pod),
       static_cast<double>(a.lineage.mutation_seed >> 32),
       static_cast<double>(a.lineage.mutation_seed & 0xFFFFFFFFULL)});
  std::vector<double> tag_bytes;
  for (char c : a.algo_tag) tag_bytes.push_back(static_cast<double>(static_cast<unsigned char>(c)));
  add("algo_tag", {static_cast<std::uint64_t>(tag_bytes.size())}, tag_bytes);
  if (meta) {
    add("meta", {3}, {meta->wall_seconds, meta->env_steps, meta->score});
  }
  return ts;
}

inline AgentArtifact artifact_from_tensors(const std::vector<NamedTensor>& tensors,
                                           CheckpointMeta* meta = nullptr) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t;
  auto need = [&](const std::string& name) -> const NamedTensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw CorruptionError("checkpoint: missing tensor '" + name + "'");
    return *it->second;
  };
  auto read_mlp = [&](const std::string& prefix) {
    MlpParams mlp;
    for (std::size_t i = 0;; ++i) {
      const std::string wname = prefix + "/layer" + std::to_string(i) + "/weight";
      if (!by_name.count(wname)) break;
      const NamedTensor& w = need(wname);
      const NamedTensor& b = need(prefix + "/layer" + std::to_string(i) + "/bias");
      if (w.dims.size() != 2 || b.dims.size() != 1 || b.dims[0] != w.dims[1]) {
        throw CorruptionError("checkpoint: bad shapes for '" + wname + "'");
      }
      MlpLayer layer;
      layer.weight = Tensor2(w.dims[0], w.dims[1]);
      layer.weight.data = w.values;
      layer.bias = b.values;
      mlp.layers.push_back(std::move(layer));
    }
    if (mlp.layers.empty()) throw CorruptionError("checkpoint: no layers under '" + prefix + "'");
    return mlp;
  };

  AgentArtifact a;
  a.actor.mean_net = read_mlp("actor");
  a.actor.log_std = need("actor/log_std").values;
  a.critic = read_mlp("critic");
  a.optimizer.m = need("optim/m").values;
  a.optimizer.v = need("optim/v").values;
  const NamedTensor& scalars = need("optim/scalars");
  if (scalars.values.size() != 5) throw CorruptionError("checkpoint: bad optim/scalars");
  a.optimizer.t = static_cast<std::int64_t>(scalars.values[0]);
  a.optimizer.beta1 = scalars.values[1];
  a.optimizer.beta2 = scalars.values[2];
  a.optimizer.eps = scalars.values[3];
  a.optimizer.lr = scalars.values[4];
  if (a.optimizer.m.size() != a.param_count() || a.optimizer.v.size() != a.param_count()) {
    throw CorruptionError("checkpoint: optimizer state size mismatch");
  }
  const NamedTensor& lineage = need("lineage");
  if (lineage.values.size() != 3) throw CorruptionError("checkpoint: bad lineage");
  a.lineage.parent_pod = static_cast<std::int64_t>(lineage.values[0]);
  a.lineage.mutation_seed = (static_cast<std::uint64_t>(lineage.values[1]) << 32) |
                            static_cast<std::uint64_t>(lineage.values[2]);
  a.algo_tag.clear();
  for (double v : need("algo_tag").values) a.algo_tag.push_back(static_cast<char>(v));
  if (meta && by_name.count("meta")) {
    const NamedTensor& m = need("meta");
    if (m.values.size() == 3) {
      meta->wall_seconds = m.values[0];
      meta->env_steps = m.values[1];
      meta->score = m.values[2];
    }
  }
  return a;
}

inline void save_checkpoint(const AgentArtifact& artifact, const std::string& path,
                            const CheckpointMeta* meta = nullptr) {
  const std::vector<std::uint8_t> bytes = encode_checkpoint(artifact_to_tensors(artifact, meta));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("save_checkpoint: cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw UsageError("save_checkpoint: write failed for '" + path + "'");
}

inline AgentArtifact load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("load_checkpoint: cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return artifact_from_tensors(decode_checkpoint(bytes), meta);
}

}  // namespace podracer
