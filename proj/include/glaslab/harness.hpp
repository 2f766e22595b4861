#ifndef GLASLAB_HARNESS_HPP
#define GLASLAB_HARNESS_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "glaslab/lattice.hpp"
#include "glaslab/stats.hpp"

#include "json.hpp"

namespace glaslab {

constexpr const char* kSchemaVersion = "glaslab-records-1";
constexpr const char* kToolVersion = "0.1.0";

struct ExperimentConfig {
  std::string kind = "simulate";  // variance-scan | gg-scan | ibp | free-energy
                                  // | exact-audit | perturbation-audit | simulate
  int dim = 1;
  std::vector<int> n_list{4};
  ModelParams model;
  PerturbationSpec pert;
  int replicas = 2;
  int burn_in = 500;
  int samples = 2000;
  int thinning = 2;
  long disorders = 64;
  uint64_t seed = 12345;
  int workers = 1;
  std::string out_dir = "out";
  std::string gg_f = "clamp(R12)";
  int gg_m = 2;
  std::vector<double> c_list{0.2, 0.1, 0.05, 0.025};  // perturbation-audit
  std::vector<double> h_grid;                         // free-energy h scan (optional)
  std::vector<double> beta_grid;                      // thermo grid; empty = auto
  bool use_exact = true;  // oracle inner expectations when the lattice allows

  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;
};

struct ResultRecord {
  std::string kind;
  double beta = 0.0;
  double h = 0.0;
  double u = 0.0;
  double r = 0.0;
  std::string extra;  // experiment-specific parameter, e.g. "c=0.1"
  int n = 0;
  std::string observable;
  double value = 0.0;
  double err = 0.0;
  long ensemble = 0;
  uint64_t seed = 0;
  std::string version = kToolVersion;

  bool operator==(const ResultRecord&) const = default;
};

struct ScalingFit {
  std::vector<long> volumes;
  std::vector<double> values;
  std::vector<double> errors;
  double slope = 0.0;
  double slope_err = 0.0;
  double intercept = 0.0;
};

// Weighted least squares on (log |V_n|, log value); refuses non-positive
// values.
ScalingFit fit_scaling(const std::vector<long>& volumes, const std::vector<double>& values,
                       const std::vector<double>& errors);

struct ExperimentOutcome {
  std::vector<ResultRecord> records;
  bool acceptance_failed = false;  // exact-audit verdict
};

// Deterministic for a given (config, seed) at any worker count. Progress
// is checkpointed per disorder realization under config.out_dir; records
// are written atomically at completion.
ExperimentOutcome run_experiment(const ExperimentConfig& config);

void emit_report(const std::vector<ResultRecord>& records, const std::string& out_dir);
std::vector<ResultRecord> read_records_json(const std::string& path);
std::vector<ResultRecord> parse_records_csv(const std::string& path);

std::string format_params(const ModelParams& p);

}  // namespace glaslab

#endif
