#ifndef GLASLAB_DISORDER_HPP
#define GLASLAB_DISORDER_HPP

#include <cstdint>
#include <iosfwd>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "glaslab/lattice.hpp"

namespace glaslab {

// Counter-style stream derivation: every random quantity is keyed by
// (master_seed, realization_index, purpose_tag [, counter]), so disorder
// parallelism never shares generator state.
namespace rng {

constexpr uint64_t kTagField = 0x67;       // the Gaussian field g
constexpr uint64_t kTagXiBase = 0x1000;    // + p for the rank-p coupling tensor
constexpr uint64_t kTagChainBase = 0x2000; // + replica_id for MCMC substreams
constexpr uint64_t kTagInitBase = 0x3000;  // + replica_id for initial configs

uint64_t mix(uint64_t a, uint64_t b);
uint64_t mix(uint64_t a, uint64_t b, uint64_t c);
uint64_t mix(uint64_t a, uint64_t b, uint64_t c, uint64_t d);

// Uniform in (0,1), 53-bit, from a single hashed word.
double to_unit(uint64_t word);

// Stateless draws addressed by counter; dense storage and on-the-fly
// generation agree by construction.
double counter_gaussian(uint64_t key, uint64_t counter);
double counter_draw(XiLaw law, uint64_t key, uint64_t counter);

}  // namespace rng

struct RNGSpec {
  uint64_t master_seed = 0;

  uint64_t substream_key(uint64_t realization_index, uint64_t purpose_tag) const {
    return rng::mix(master_seed, realization_index, purpose_tag);
  }
  std::mt19937_64 sequential_stream(uint64_t realization_index, uint64_t purpose_tag) const {
    return std::mt19937_64(substream_key(realization_index, purpose_tag));
  }
};

// Rank-p coupling tensor with site_count^p entries. Kept dense when it
// fits the memory cap, otherwise each entry is recomputed from its counter.
struct XiTensor {
  int p = 2;
  long site_count = 0;
  XiLaw law = XiLaw::gaussian;
  uint64_t key = 0;
  bool dense = false;
  std::vector<double> values;  // filled iff dense

  long entry_count() const;
  double at(long flat_index) const;
  // flat index of the tuple (x_1,...,x_p), row-major
  long flatten(const std::vector<int>& tuple) const;
};

struct DisorderRealization {
  std::vector<double> g;        // standard Gaussian field, one per site
  std::map<int, XiTensor> xi;   // p -> tensor, exactly the support of alpha
  uint64_t master_seed = 0;
  long realization_index = 0;
};

// Entries-per-tensor cap before switching to on-the-fly generation; the
// hard cap in sample_disorder is 64x this.
constexpr long kDenseXiCap = 1L << 22;

DisorderRealization sample_disorder(const LatticeSpec& lattice, const PerturbationSpec& pert,
                                    const RNGSpec& rng, long realization_index);

double xi_law_draw(XiLaw law, std::mt19937_64& stream);

XiLaw parse_xi_law(const std::string& name);
std::string xi_law_name(XiLaw law);

// Versioned binary dump/restore for post-mortem reproduction.
void dump_disorder(const DisorderRealization& d, const LatticeSpec& lattice, std::ostream& out);
DisorderRealization restore_disorder(std::istream& in, LatticeSpec& lattice_out);

}  // namespace glaslab

#endif
