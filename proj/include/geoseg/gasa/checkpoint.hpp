#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "geoseg/crc32.hpp"
#include "geoseg/gasa/model.hpp"

// Checkpoint file layout (little endian):
//   magic "GSEGCKPT" (8 bytes)
//   u32 format version (1)
//   config block: u32 count, then per field u32 name_len, name, f64 value
//   u32 parameter count, then per parameter:
//     u32 name_len, name, u32 rank, u64 dims[rank], float32 payload
//   u32 crc32 of everything before it
// Loading verifies magic, version, crc and every shape against the config.

namespace geoseg::gasa {

namespace ckpt_detail {

struct Writer {
  std::vector<unsigned char> buf;

  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    buf.insert(buf.end(), c, c + n);
  }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void f64(double v) { bytes(&v, 8); }
  void f32(float v) { bytes(&v, 4); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
};

struct Reader {
  const unsigned char* p;
  std::size_t n, off = 0;
  std::string file;

  void need(std::size_t k) {
    if (off + k > n)
      throw CheckpointError("checkpoint '" + file + "': truncated at offset " +
                            std::to_string(off));
  }
  void bytes(void* dst, std::size_t k) {
    need(k);
    std::memcpy(dst, p + off, k);
    off += k;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, 8);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, 8);
    return v;
  }
  std::string str() {
    const auto len = u32();
    need(len);
    std::string s(reinterpret_cast<const char*>(p + off), len);
    off += len;
    return s;
  }
};

inline std::vector<std::pair<std::string, double>> config_fields(const GasaConfig& c) {
  return {
      {"model_dim", double(c.model_dim)},
      {"num_heads", double(c.num_heads)},
      {"num_layers", double(c.num_layers)},
      {"num_queries", double(c.num_queries)},
      {"feature_dim", double(c.feature_dim)},
      {"ffn_mult", double(c.ffn_mult)},
      {"num_spatial", double(c.num_spatial)},
      {"kernel_hidden", double(c.kernel_hidden)},
      {"kernel_clamp_lo", c.kernel_clamp_lo},
      {"kernel_clamp_hi", c.kernel_clamp_hi},
      {"kernel_mode", double(static_cast<int>(c.kernel_mode))},
      {"rbf_sigma", c.rbf_sigma},
      {"pe_frequencies", double(c.pe_frequencies)},
      {"pe_scale", c.pe_scale},
      {"pe_hidden", double(c.pe_hidden)},
      {"world_pe", c.world_pe ? 1.0 : 0.0},
      {"spatial_tokens", c.spatial_tokens ? 1.0 : 0.0},
      {"biased_query_attention", c.biased_query_attention ? 1.0 : 0.0},
      {"centroid_hidden", double(c.centroid_hidden)},
  };
}

inline void apply_config_field(GasaConfig& c, const std::string& k, double v) {
  if (k == "model_dim") c.model_dim = int(v);
  else if (k == "num_heads") c.num_heads = int(v);
  else if (k == "num_layers") c.num_layers = int(v);
  else if (k == "num_queries") c.num_queries = int(v);
  else if (k == "feature_dim") c.feature_dim = int(v);
  else if (k == "ffn_mult") c.ffn_mult = int(v);
  else if (k == "num_spatial") c.num_spatial = int(v);
  else if (k == "kernel_hidden") c.kernel_hidden = int(v);
  else if (k == "kernel_clamp_lo") c.kernel_clamp_lo = v;
  else if (k == "kernel_clamp_hi") c.kernel_clamp_hi = v;
  else if (k == "kernel_mode") c.kernel_mode = static_cast<KernelMode>(int(v));
  else if (k == "rbf_sigma") c.rbf_sigma = v;
  else if (k == "pe_frequencies") c.pe_frequencies = int(v);
  else if (k == "pe_scale") c.pe_scale = v;
  else if (k == "pe_hidden") c.pe_hidden = int(v);
  else if (k == "world_pe") c.world_pe = v != 0.0;
  else if (k == "spatial_tokens") c.spatial_tokens = v != 0.0;
  else if (k == "biased_query_attention") c.biased_query_attention = v != 0.0;
  else if (k == "centroid_hidden") c.centroid_hidden = int(v);
  else throw CheckpointError("checkpoint: unknown config field '" + k + "'");
}

}  // namespace ckpt_detail

inline constexpr char kCheckpointMagic[8] = {'G', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(GasaModel<T>& model, const std::string& path) {
  ckpt_detail::Writer w;
  w.bytes(kCheckpointMagic, 8);
  w.u32(kCheckpointVersion);
  const auto fields = ckpt_detail::config_fields(model.cfg);
  w.u32(static_cast<std::uint32_t>(fields.size()));
  for (const auto& [k, v] : fields) {
    w.str(k);
    w.f64(v);
  }
  std::uint32_t count = 0;
  model.visit_params([&](const std::string&, num::DualTensor<T>&) { ++count; });
  w.u32(count);
  model.visit_params([&](const std::string& name, num::DualTensor<T>& p) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(p.value.rank()));
    for (auto d : p.value.shape()) w.u64(d);
    for (std::size_t i = 0; i < p.value.numel(); ++i) w.f32(static_cast<float>(p.value[i]));
  });
  w.u32(geoseg::crc32(w.buf.data(), w.buf.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("checkpoint: cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(w.buf.data()),
            static_cast<std::streamsize>(w.buf.size()));
  if (!out) throw CheckpointError("checkpoint: write failed for '" + path + "'");
}

template <typename T>
GasaModel<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open '" + path + "'");
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 16) throw CheckpointError("checkpoint '" + path + "': truncated header");

  // crc covers everything before the trailing u32
  std::uint32_t stored;
  std::memcpy(&stored, buf.data() + buf.size() - 4, 4);
  const std::uint32_t actual = geoseg::crc32(buf.data(), buf.size() - 4);
  if (stored != actual)
    throw CheckpointError("checkpoint '" + path + "': crc mismatch (corrupt file)");

  ckpt_detail::Reader r{buf.data(), buf.size() - 4, 0, path};
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw CheckpointError("checkpoint '" + path + "': bad magic");
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint '" + path + "': unsupported version " +
                          std::to_string(version));
  GasaConfig cfg;
  const auto nfields = r.u32();
  for (std::uint32_t i = 0; i < nfields; ++i) {
    const auto key = r.str();
    const auto val = r.f64();
    ckpt_detail::apply_config_field(cfg, key, val);
  }
  GasaModel<T> model = GasaModel<T>::init(cfg, 0);
  const auto nparams = r.u32();
  std::uint32_t seen = 0;
  std::vector<std::pair<std::string, num::DualTensor<T>*>> by_name;
  model.visit_params([&](const std::string& name, num::DualTensor<T>& p) {
    by_name.emplace_back(name, &p);
  });
  for (std::uint32_t i = 0; i < nparams; ++i) {
    const auto name = r.str();
    const auto rank = r.u32();
    std::vector<std::size_t> dims(rank);
    for (auto& d : dims) d = static_cast<std::size_t>(r.u64());
    num::DualTensor<T>* target = nullptr;
    for (auto& [n2, p] : by_name)
      if (n2 == name) target = p;
    if (!target) throw CheckpointError("checkpoint '" + path + "': unknown parameter '" + name + "'");
    if (dims != target->value.shape())
      throw CheckpointError("checkpoint '" + path + "': parameter '" + name + "' has shape " +
                            num::shape_str(dims) + ", config implies " +
                            num::shape_str(target->value.shape()));
    for (std::size_t j = 0; j < target->value.numel(); ++j) {
      float f;
      r.bytes(&f, 4);
      target->value[j] = static_cast<T>(f);
    }
    ++seen;
  }
  if (seen != by_name.size())
    throw CheckpointError("checkpoint '" + path + "': parameter count mismatch");
  model.kernel.clamp_lo = static_cast<T>(cfg.kernel_clamp_lo);
  model.kernel.clamp_hi = static_cast<T>(cfg.kernel_clamp_hi);
  return model;
}

}  // namespace geoseg::gasa
