#include "glaslab/disorder.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <numbers>
#include <ostream>

namespace glaslab {

namespace rng {

namespace {
uint64_t splitmix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace

uint64_t mix(uint64_t a, uint64_t b) { return splitmix64(splitmix64(a) ^ b); }
uint64_t mix(uint64_t a, uint64_t b, uint64_t c) { return splitmix64(mix(a, b) ^ c); }
uint64_t mix(uint64_t a, uint64_t b, uint64_t c, uint64_t d) {
  return splitmix64(mix(a, b, c) ^ d);
}

double to_unit(uint64_t word) {
  // (0,1): shift to 53 bits, offset by half an ulp
  return (static_cast<double>(word >> 11) + 0.5) * 0x1p-53;
}

double counter_gaussian(uint64_t key, uint64_t counter) {
  double u1 = to_unit(mix(key, 2 * counter));
  double u2 = to_unit(mix(key, 2 * counter + 1));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double counter_draw(XiLaw law, uint64_t key, uint64_t counter) {
  switch (law) {
    case XiLaw::gaussian:
      return counter_gaussian(key, counter);
    case XiLaw::rademacher:
      return (mix(key, counter) & 1ULL) ? 1.0 : -1.0;
    case XiLaw::uniform:
      return (2.0 * to_unit(mix(key, counter)) - 1.0) * std::sqrt(3.0);
  }
  throw std::logic_error("counter_draw: bad law");
}

}  // namespace rng

long XiTensor::entry_count() const {
  long total = 1;
  for (int l = 0; l < p; ++l) total *= site_count;
  return total;
}

double XiTensor::at(long flat_index) const {
  if (dense) return values[static_cast<size_t>(flat_index)];
  return rng::counter_draw(law, key, static_cast<uint64_t>(flat_index));
}

long XiTensor::flatten(const std::vector<int>& tuple) const {
  long flat = 0;
  for (int l = p - 1; l >= 0; --l) flat = flat * site_count + tuple[static_cast<size_t>(l)];
  return flat;
}

DisorderRealization sample_disorder(const LatticeSpec& lattice, const PerturbationSpec& pert,
                                    const RNGSpec& rng, long realization_index) {
  if (realization_index < 0)
    throw std::invalid_argument("sample_disorder: realization_index must be >= 0");
  pert.validate();

  DisorderRealization d;
  d.master_seed = rng.master_seed;
  d.realization_index = realization_index;

  uint64_t gkey = rng.substream_key(static_cast<uint64_t>(realization_index), rng::kTagField);
  d.g.resize(static_cast<size_t>(lattice.site_count));
  for (long x = 0; x < lattice.site_count; ++x)
    d.g[static_cast<size_t>(x)] = rng::counter_gaussian(gkey, static_cast<uint64_t>(x));

  if (pert.mode == PertMode::off) return d;

  for (const auto& [p, a] : pert.alpha) {
    if (a == 0.0) continue;
    XiTensor t;
    t.p = p;
    t.site_count = lattice.site_count;
    t.law = pert.xi_law;
    t.key = rng.substream_key(static_cast<uint64_t>(realization_index),
                              rng::kTagXiBase + static_cast<uint64_t>(p));
    double log_entries = p * std::log(static_cast<double>(lattice.site_count));
    if (log_entries > std::log(64.0 * static_cast<double>(kDenseXiCap)))
      throw std::runtime_error("sample_disorder: site_count^p exceeds the memory cap");
    long entries = t.entry_count();
    if (entries <= kDenseXiCap) {
      t.dense = true;
      t.values.resize(static_cast<size_t>(entries));
      for (long i = 0; i < entries; ++i)
        t.values[static_cast<size_t>(i)] =
            rng::counter_draw(t.law, t.key, static_cast<uint64_t>(i));
    }
    d.xi.emplace(p, std::move(t));
  }
  return d;
}

double xi_law_draw(XiLaw law, std::mt19937_64& stream) {
  switch (law) {
    case XiLaw::gaussian: {
      std::normal_distribution<double> n01(0.0, 1.0);
      return n01(stream);
    }
    case XiLaw::rademacher:
      return (stream() & 1ULL) ? 1.0 : -1.0;
    case XiLaw::uniform: {
      std::uniform_real_distribution<double> u(-std::sqrt(3.0), std::sqrt(3.0));
      return u(stream);
    }
  }
  throw std::logic_error("xi_law_draw: bad law");
}

XiLaw parse_xi_law(const std::string& name) {
  if (name == "gaussian") return XiLaw::gaussian;
  if (name == "rademacher") return XiLaw::rademacher;
  if (name == "uniform") return XiLaw::uniform;
  throw std::invalid_argument("unknown xi law: " + name);
}

std::string xi_law_name(XiLaw law) {
  switch (law) {
    case XiLaw::gaussian: return "gaussian";
    case XiLaw::rademacher: return "rademacher";
    case XiLaw::uniform: return "uniform";
  }
  return "?";
}

namespace {
constexpr uint32_t kDumpMagic = 0x67736c62;  // "gslb"
constexpr uint32_t kDumpVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("restore_disorder: truncated stream");
  return v;
}
}  // namespace

void dump_disorder(const DisorderRealization& d, const LatticeSpec& lattice, std::ostream& out) {
  put(out, kDumpMagic);
  put(out, kDumpVersion);
  put(out, static_cast<int32_t>(lattice.d));
  put(out, static_cast<int32_t>(lattice.n));
  put(out, d.master_seed);
  put(out, static_cast<int64_t>(d.realization_index));
  put(out, static_cast<int64_t>(d.g.size()));
  out.write(reinterpret_cast<const char*>(d.g.data()),
            static_cast<std::streamsize>(d.g.size() * sizeof(double)));
  put(out, static_cast<int32_t>(d.xi.size()));
  for (const auto& [p, t] : d.xi) {
    put(out, static_cast<int32_t>(p));
    put(out, static_cast<int32_t>(t.law));
    put(out, t.key);
    put(out, static_cast<uint8_t>(t.dense ? 1 : 0));
    if (t.dense) {
      put(out, static_cast<int64_t>(t.values.size()));
      out.write(reinterpret_cast<const char*>(t.values.data()),
                static_cast<std::streamsize>(t.values.size() * sizeof(double)));
    }
  }
}

DisorderRealization restore_disorder(std::istream& in, LatticeSpec& lattice_out) {
  if (get<uint32_t>(in) != kDumpMagic) throw std::runtime_error("restore_disorder: bad magic");
  if (get<uint32_t>(in) != kDumpVersion)
    throw std::runtime_error("restore_disorder: unsupported version");
  int d_dim = get<int32_t>(in);
  int n = get<int32_t>(in);
  lattice_out = build_lattice(d_dim, n);
  DisorderRealization d;
  d.master_seed = get<uint64_t>(in);
  d.realization_index = get<int64_t>(in);
  auto gsize = static_cast<size_t>(get<int64_t>(in));
  d.g.resize(gsize);
  in.read(reinterpret_cast<char*>(d.g.data()),
          static_cast<std::streamsize>(gsize * sizeof(double)));
  int nxi = get<int32_t>(in);
  for (int k = 0; k < nxi; ++k) {
    XiTensor t;
    t.p = get<int32_t>(in);
    t.site_count = lattice_out.site_count;
    t.law = static_cast<XiLaw>(get<int32_t>(in));
    t.key = get<uint64_t>(in);
    t.dense = get<uint8_t>(in) != 0;
    if (t.dense) {
      auto vs = static_cast<size_t>(get<int64_t>(in));
      t.values.resize(vs);
      in.read(reinterpret_cast<char*>(t.values.data()),
              static_cast<std::streamsize>(vs * sizeof(double)));
    }
    d.xi.emplace(t.p, std::move(t));
  }
  if (!in) throw std::runtime_error("restore_disorder: truncated stream");
  return d;
}

}  // namespace glaslab
