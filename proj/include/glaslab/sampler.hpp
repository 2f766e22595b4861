#ifndef GLASLAB_SAMPLER_HPP
#define GLASLAB_SAMPLER_HPP

#include <random>
#include <string>
#include <vector>

#include "glaslab/disorder.hpp"
#include "glaslab/lattice.hpp"

namespace glaslab {

struct ProposalSchedule {
  std::vector<double> widths;  // per-site Gaussian proposal width
  double band_lo = 0.35;
  double band_hi = 0.55;
  int epoch_sweeps = 50;
  bool frozen = false;

  static ProposalSchedule uniform(long site_count, double width = 1.0) {
    ProposalSchedule s;
    s.widths.assign(static_cast<size_t>(site_count), width);
    return s;
  }
};

struct SweepStats {
  double acceptance = 0.0;
  double mean_abs_dphi = 0.0;
  double energy = 0.0;
  std::vector<uint8_t> site_accepted;
};

struct ReplicaState {
  SpinConfig config;
  int replica_id = 0;
  long sweep_counter = 0;
  std::mt19937_64 stream;
  double energy = 0.0;  // maintained incrementally; real modes only
};

ReplicaState init_replica(const LatticeSpec& lattice, const DisorderRealization& disorder,
                          const ModelParams& params, const PerturbationSpec& pert,
                          const RNGSpec& rng, long realization_index, int replica_id);

// One sequential site pass; phi' = phi + width * N(0,1), accepted with
// probability min(1, exp(-delta)).
SweepStats metropolis_sweep(ReplicaState& state, const DisorderRealization& disorder,
                            const ModelParams& params, const PerturbationSpec& pert,
                            const LatticeSpec& lattice, const ProposalSchedule& schedule);

// Width *= 1.1 above the band, *= 0.9 below; no-op once frozen.
void adapt_proposals(ProposalSchedule& schedule,
                     const std::vector<double>& per_site_acceptance);

struct ChainResult {
  std::vector<std::vector<SpinConfig>> snapshots;  // [replica][sample]
  std::vector<double> final_widths;
  std::vector<double> post_adapt_acceptance;  // per site, over the sampling phase
};

ChainResult run_chain(const LatticeSpec& lattice, const DisorderRealization& disorder,
                      const ModelParams& params, const PerturbationSpec& pert,
                      const RNGSpec& rng, long realization_index, int m, int burn_in,
                      int samples, int thinning);

// One chain with an explicit replica id; run_chain(m) is exactly this for
// replica ids 0..m-1, and a tempering rung k with swaps disabled matches
// replica id k at that rung's beta bit for bit.
std::vector<SpinConfig> run_single_chain(const LatticeSpec& lattice,
                                         const DisorderRealization& disorder,
                                         const ModelParams& params,
                                         const PerturbationSpec& pert, const RNGSpec& rng,
                                         long realization_index, int replica_id,
                                         int burn_in, int samples, int thinning);

// Replica exchange over an increasing beta ladder; returns one sample
// stream per ladder rung. The marginal at each beta stays the Gibbs law.
std::vector<std::vector<SpinConfig>> tempering_ladder(
    const LatticeSpec& lattice, const DisorderRealization& disorder,
    const ModelParams& params, const PerturbationSpec& pert,
    const std::vector<double>& betas, const RNGSpec& rng, long realization_index,
    int burn_in, int samples, int thinning, bool swaps_enabled = true);

// Snapshot stream to disk for offline re-analysis: one CSV row per
// snapshot, columns replica,sample,phi_0..phi_{N-1}.
void write_snapshots_csv(const std::string& path,
                         const std::vector<std::vector<SpinConfig>>& streams);

}  // namespace glaslab

#endif
