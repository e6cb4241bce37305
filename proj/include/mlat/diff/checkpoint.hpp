#pragma once

// Checkpoint layout (all little-endian):
//   "MLAT" | version u32 | count u64 | count x { name_len u32 | name bytes | rank u32 |
//   extents u64[rank] | values f64[prod(extents)] }
// Optimizer state lives under the reserved prefix "opt/": "opt/step" (scalar), "opt/m/<name>",
// "opt/v/<name>". Metadata strings are stored as empty tensors named "meta/<key>=<value>".

#include <map>
#include <string>

#include "mlat/core/binary_io.hpp"
#include "mlat/diff/param_store.hpp"

namespace mlat {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ParamStore store;
  std::map<std::string, std::string> meta;
};

namespace detail {
inline void put_tensor(io::Writer& w, const std::string& name, const Tensor& t) {
  w.str(name);
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) w.u64(e);
  w.f64s(t.raw());
}
}  // namespace detail

inline std::vector<char> serialize_checkpoint(const ParamStore& store, const std::map<std::string, std::string>& meta = {}) {
  io::Writer w;
  w.magic("MLAT");
  w.u32(kCheckpointVersion);
  std::uint64_t count = store.params().size() + store.first_moments().size() + store.second_moments().size() + 1 +
                        meta.size();
  w.u64(count);
  for (const auto& [k, v] : meta) detail::put_tensor(w, "meta/" + k + "=" + v, Tensor(Shape{0}));
  for (const auto& [name, t] : store.params()) detail::put_tensor(w, name, t);
  detail::put_tensor(w, "opt/step", Tensor::scalar(static_cast<double>(store.step())));
  for (const auto& [name, t] : store.first_moments()) detail::put_tensor(w, "opt/m/" + name, t);
  for (const auto& [name, t] : store.second_moments()) detail::put_tensor(w, "opt/v/" + name, t);
  return w.buffer();
}

inline void save_checkpoint(const std::string& path, const ParamStore& store,
                            const std::map<std::string, std::string>& meta = {}) {
  io::Writer w;
  const auto bytes = serialize_checkpoint(store, meta);
  w.bytes(bytes.data(), bytes.size());
  w.save(path);
}

inline Checkpoint parse_checkpoint(io::Reader& r) {
  r.expect_magic("MLAT");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError(r.origin() + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  const std::uint64_t count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw FormatError(r.origin() + ": implausible rank for '" + name + "'");
    Shape shape(rank);
    for (auto& e : shape) e = r.u64();
    Tensor t(shape, r.f64s(shape_size(shape)));
    if (name.rfind("meta/", 0) == 0) {
      const auto eq = name.find('=');
      if (eq == std::string::npos) throw FormatError(r.origin() + ": malformed metadata entry '" + name + "'");
      ck.meta[name.substr(5, eq - 5)] = name.substr(eq + 1);
    } else if (name == "opt/step") {
      ck.store.set_step(static_cast<std::uint64_t>(t.item()));
    } else if (name.rfind("opt/m/", 0) == 0) {
      ck.store.first_moments()[name.substr(6)] = std::move(t);
    } else if (name.rfind("opt/v/", 0) == 0) {
      ck.store.second_moments()[name.substr(6)] = std::move(t);
    } else {
      ck.store.set(name, std::move(t));
    }
  }
  if (!r.at_end()) throw FormatError(r.origin() + ": trailing bytes after checkpoint entries");
  return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  auto r = io::Reader::open(path);
  return parse_checkpoint(r);
}

}  // namespace mlat
