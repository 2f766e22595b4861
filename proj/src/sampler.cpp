#include "glaslab/sampler.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace glaslab {

ReplicaState init_replica(const LatticeSpec& lattice, const DisorderRealization& disorder,
                          const ModelParams& params, const PerturbationSpec& pert,
                          const RNGSpec& rng, long realization_index, int replica_id) {
  if (pert.mode == PertMode::imaginary_exact)
    throw std::invalid_argument("init_replica: cannot sample a complex weight");
  ReplicaState st;
  st.replica_id = replica_id;
  st.config = SpinConfig(lattice.site_count);
  std::mt19937_64 init_stream = rng.sequential_stream(
      static_cast<uint64_t>(realization_index),
      rng::kTagInitBase + static_cast<uint64_t>(replica_id));
  std::normal_distribution<double> n01(0.0, 1.0);
  for (auto& v : st.config.phi) v = 0.5 * n01(init_stream);
  st.stream = rng.sequential_stream(static_cast<uint64_t>(realization_index),
                                    rng::kTagChainBase + static_cast<uint64_t>(replica_id));
  st.energy = full_hamiltonian_real(st.config, disorder, params, pert, lattice);
  return st;
}

SweepStats metropolis_sweep(ReplicaState& state, const DisorderRealization& disorder,
                            const ModelParams& params, const PerturbationSpec& pert,
                            const LatticeSpec& lattice, const ProposalSchedule& schedule) {
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  SweepStats stats;
  stats.site_accepted.assign(static_cast<size_t>(lattice.site_count), 0);
  long accepted = 0;
  double abs_dphi = 0.0;
  for (long s = 0; s < lattice.site_count; ++s) {
    double old_v = state.config.phi[static_cast<size_t>(s)];
    double prop = old_v + schedule.widths[static_cast<size_t>(s)] * n01(state.stream);
    double delta = energy_delta(state.config, disorder, params, pert, lattice,
                                static_cast<int>(s), prop);
    if (delta <= 0.0 || u01(state.stream) < std::exp(-delta)) {
      state.config.phi[static_cast<size_t>(s)] = prop;
      state.energy += delta;
      ++accepted;
      stats.site_accepted[static_cast<size_t>(s)] = 1;
      abs_dphi += std::abs(prop - old_v);
    }
  }
  ++state.sweep_counter;
  stats.acceptance = static_cast<double>(accepted) / static_cast<double>(lattice.site_count);
  stats.mean_abs_dphi = abs_dphi / static_cast<double>(lattice.site_count);
  stats.energy = state.energy;
  return stats;
}

void adapt_proposals(ProposalSchedule& schedule,
                     const std::vector<double>& per_site_acceptance) {
  if (schedule.frozen) return;
  for (size_t s = 0; s < schedule.widths.size(); ++s) {
    if (per_site_acceptance[s] > schedule.band_hi)
      schedule.widths[s] *= 1.1;
    else if (per_site_acceptance[s] < schedule.band_lo)
      schedule.widths[s] *= 0.9;
  }
}

namespace {

// burn-in with epoch-wise width adaptation; schedule frozen on return
void burn_in_chain(ReplicaState& st, const DisorderRealization& disorder,
                   const ModelParams& params, const PerturbationSpec& pert,
                   const LatticeSpec& lattice, ProposalSchedule& schedule, int burn_in) {
  std::vector<double> accum(static_cast<size_t>(lattice.site_count), 0.0);
  int in_epoch = 0;
  for (int sweep = 0; sweep < burn_in; ++sweep) {
    SweepStats stats = metropolis_sweep(st, disorder, params, pert, lattice, schedule);
    for (size_t s = 0; s < accum.size(); ++s) accum[s] += stats.site_accepted[s];
    if (++in_epoch == schedule.epoch_sweeps) {
      for (auto& a : accum) a /= in_epoch;
      adapt_proposals(schedule, accum);
      accum.assign(accum.size(), 0.0);
      in_epoch = 0;
    }
  }
  schedule.frozen = true;
}

}  // namespace

namespace {

struct SingleChainOut {
  std::vector<SpinConfig> snapshots;
  std::vector<double> widths;
  std::vector<double> acceptance;  // per site, sampling phase
};

SingleChainOut single_chain(const LatticeSpec& lattice, const DisorderRealization& disorder,
                            const ModelParams& params, const PerturbationSpec& pert,
                            const RNGSpec& rng, long realization_index, int replica_id,
                            int burn_in, int samples, int thinning) {
  ReplicaState st = init_replica(lattice, disorder, params, pert, rng,
                                 realization_index, replica_id);
  ProposalSchedule schedule = ProposalSchedule::uniform(lattice.site_count);
  burn_in_chain(st, disorder, params, pert, lattice, schedule, burn_in);

  SingleChainOut out;
  std::vector<double> accum(static_cast<size_t>(lattice.site_count), 0.0);
  long sampling_sweeps = 0;
  out.snapshots.reserve(static_cast<size_t>(samples));
  while (static_cast<int>(out.snapshots.size()) < samples) {
    for (int t = 0; t < thinning; ++t) {
      SweepStats stats = metropolis_sweep(st, disorder, params, pert, lattice, schedule);
      for (size_t s = 0; s < accum.size(); ++s) accum[s] += stats.site_accepted[s];
      ++sampling_sweeps;
    }
    out.snapshots.push_back(st.config);
  }
  out.widths = schedule.widths;
  out.acceptance.assign(static_cast<size_t>(lattice.site_count), 0.0);
  if (sampling_sweeps > 0)
    for (size_t s = 0; s < accum.size(); ++s)
      out.acceptance[s] = accum[s] / static_cast<double>(sampling_sweeps);
  return out;
}

}  // namespace

ChainResult run_chain(const LatticeSpec& lattice, const DisorderRealization& disorder,
                      const ModelParams& params, const PerturbationSpec& pert,
                      const RNGSpec& rng, long realization_index, int m, int burn_in,
                      int samples, int thinning) {
  if (m < 1) throw std::invalid_argument("run_chain: need m >= 1 replicas");
  if (thinning < 1) thinning = 1;
  ChainResult out;
  out.snapshots.resize(static_cast<size_t>(m));
  for (int rep = 0; rep < m; ++rep) {
    SingleChainOut sc = single_chain(lattice, disorder, params, pert, rng,
                                     realization_index, rep, burn_in, samples, thinning);
    out.snapshots[static_cast<size_t>(rep)] = std::move(sc.snapshots);
    if (rep == 0) {
      out.final_widths = std::move(sc.widths);
      out.post_adapt_acceptance = std::move(sc.acceptance);
    }
  }
  return out;
}

std::vector<SpinConfig> run_single_chain(const LatticeSpec& lattice,
                                         const DisorderRealization& disorder,
                                         const ModelParams& params,
                                         const PerturbationSpec& pert, const RNGSpec& rng,
                                         long realization_index, int replica_id,
                                         int burn_in, int samples, int thinning) {
  if (thinning < 1) thinning = 1;
  return single_chain(lattice, disorder, params, pert, rng, realization_index, replica_id,
                      burn_in, samples, thinning)
      .snapshots;
}

std::vector<std::vector<SpinConfig>> tempering_ladder(
    const LatticeSpec& lattice, const DisorderRealization& disorder,
    const ModelParams& params, const PerturbationSpec& pert,
    const std::vector<double>& betas, const RNGSpec& rng, long realization_index,
    int burn_in, int samples, int thinning, bool swaps_enabled) {
  if (betas.size() < 2) throw std::invalid_argument("tempering_ladder: need K >= 2");
  for (size_t k = 1; k < betas.size(); ++k)
    if (betas[k] < betas[k - 1])
      throw std::invalid_argument("tempering_ladder: beta ladder must be non-decreasing");
  if (thinning < 1) thinning = 1;
  const int kk = static_cast<int>(betas.size());

  std::vector<ModelParams> ladder_params(static_cast<size_t>(kk), params);
  std::vector<ReplicaState> chains;
  std::vector<ProposalSchedule> schedules;
  for (int k = 0; k < kk; ++k) {
    ladder_params[static_cast<size_t>(k)].beta = betas[static_cast<size_t>(k)];
    // rung k reuses replica substream k, so swaps-off matches run_single_chain
    chains.push_back(init_replica(lattice, disorder, ladder_params[static_cast<size_t>(k)],
                                  pert, rng, realization_index, k));
    schedules.push_back(ProposalSchedule::uniform(lattice.site_count));
  }
  std::mt19937_64 swap_stream = rng.sequential_stream(
      static_cast<uint64_t>(realization_index), rng::kTagChainBase + 0x500);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  auto edge_sum = [&](const SpinConfig& c) {
    double s = 0.0;
    for (const auto& [a, b] : lattice.edges) s += c.phi[a] * c.phi[b];
    return s;
  };
  auto try_swaps = [&]() {
    if (!swaps_enabled) return;
    for (int k = 0; k + 1 < kk; ++k) {
      double si = edge_sum(chains[static_cast<size_t>(k)].config);
      double sj = edge_sum(chains[static_cast<size_t>(k + 1)].config);
      double log_acc = (betas[static_cast<size_t>(k)] - betas[static_cast<size_t>(k + 1)]) *
                       (sj - si);
      if (log_acc >= 0.0 || u01(swap_stream) < std::exp(log_acc)) {
        std::swap(chains[static_cast<size_t>(k)].config,
                  chains[static_cast<size_t>(k + 1)].config);
        chains[static_cast<size_t>(k)].energy = full_hamiltonian_real(
            chains[static_cast<size_t>(k)].config, disorder,
            ladder_params[static_cast<size_t>(k)], pert, lattice);
        chains[static_cast<size_t>(k + 1)].energy = full_hamiltonian_real(
            chains[static_cast<size_t>(k + 1)].config, disorder,
            ladder_params[static_cast<size_t>(k + 1)], pert, lattice);
      }
    }
  };

  std::vector<std::vector<double>> accum(
      static_cast<size_t>(kk), std::vector<double>(static_cast<size_t>(lattice.site_count), 0.0));
  for (int sweep = 0; sweep < burn_in; ++sweep) {
    for (int k = 0; k < kk; ++k) {
      auto& acc = accum[static_cast<size_t>(k)];
      SweepStats stats = metropolis_sweep(chains[static_cast<size_t>(k)], disorder,
                                          ladder_params[static_cast<size_t>(k)], pert,
                                          lattice, schedules[static_cast<size_t>(k)]);
      for (size_t s = 0; s < acc.size(); ++s) acc[s] += stats.site_accepted[s];
      int epoch = schedules[static_cast<size_t>(k)].epoch_sweeps;
      if ((sweep + 1) % epoch == 0) {
        for (auto& a : acc) a /= epoch;
        adapt_proposals(schedules[static_cast<size_t>(k)], acc);
        acc.assign(acc.size(), 0.0);
      }
    }
    try_swaps();
  }
  for (auto& sch : schedules) sch.frozen = true;

  std::vector<std::vector<SpinConfig>> streams(static_cast<size_t>(kk));
  int taken = 0;
  while (taken < samples) {
    for (int t = 0; t < thinning; ++t) {
      for (int k = 0; k < kk; ++k)
        metropolis_sweep(chains[static_cast<size_t>(k)], disorder,
                         ladder_params[static_cast<size_t>(k)], pert, lattice,
                         schedules[static_cast<size_t>(k)]);
      try_swaps();
    }
    for (int k = 0; k < kk; ++k)
      streams[static_cast<size_t>(k)].push_back(chains[static_cast<size_t>(k)].config);
    ++taken;
  }
  return streams;
}

void write_snapshots_csv(const std::string& path,
                         const std::vector<std::vector<SpinConfig>>& streams) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_snapshots_csv: cannot open " + path);
  out << "replica,sample";
  size_t sites = streams.empty() || streams[0].empty() ? 0 : streams[0][0].phi.size();
  for (size_t s = 0; s < sites; ++s) out << ",phi_" << s;
  out << "\n";
  out.precision(17);
  for (size_t rep = 0; rep < streams.size(); ++rep)
    for (size_t t = 0; t < streams[rep].size(); ++t) {
      out << rep << "," << t;
      for (double v : streams[rep][t].phi) out << "," << v;
      out << "\n";
    }
}

}  // namespace glaslab
