#pragma once

#include "ionfit/markov_model.hpp"
#include "ionfit/protocol.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ionfit {

struct SolverTolerances {
  double abs = 1e-8;
  double rel = 1e-8;
};

struct SimulationSettings {
  SolverTolerances tolerances;
  double reversal_potential = default_reversal_potential();
};

/// Identifier stored in trace metadata for the noise generator.
inline constexpr const char* kNoiseAlgorithm = "mt19937_64+std::normal_distribution(libstdc++)";

struct TraceMeta {
  std::string model;
  std::string protocol;
  std::vector<double> params;  // kinetic followed by g
  std::string params_hash;
  std::optional<std::uint64_t> seed;
  std::optional<double> sigma;
  std::string rng;
  SolverTolerances tolerances;
  double reversal_potential = 0.0;
};

/// Paired observation times (ms) and currents (nA).
struct Trace {
  std::vector<double> times;
  std::vector<double> values;
  TraceMeta meta;

  std::size_t size() const noexcept { return times.size(); }
};

struct NoiseSpec {
  double sigma = 0.0;  // nA
  std::uint64_t seed = 0;
};

/// State occupancies at each observation time, one row per time.
struct OccupancyTrace {
  std::vector<double> times;
  Eigen::MatrixXd states;
};

/// Integrates dx/dt = A(V(t)) x over a protocol in the conservation-reduced
/// (N-1)-dimensional coordinates, starting from the steady state at the
/// holding potential.
///
/// Constant-voltage segments are propagated with the exact matrix exponential
/// of the reduced affine system. Ramps use the L-stable Rodas4 Rosenbrock
/// scheme with its embedded error estimate, with steps forced onto the
/// sampling grid.
/// The plan built at construction is reused across parameter sets, which is
/// what the optimiser needs; an instance is safe to share between threads.
class Simulator {
 public:
  Simulator(MarkovModel model, Protocol protocol, SimulationSettings settings = {});

  const MarkovModel& model() const noexcept { return model_; }
  const Protocol& protocol() const noexcept { return protocol_; }
  const SimulationSettings& settings() const noexcept { return settings_; }
  const std::vector<double>& times() const noexcept { return times_; }

  /// Noise-free model output y(theta; d). Throws StiffnessError when a ramp
  /// cannot be integrated to tolerance.
  Trace simulate(const ParameterSet& params) const;
  /// Same values as simulate() without allocating a Trace; out.size() must
  /// equal the number of observations.
  void simulate_current(const ParameterSet& params, std::span<double> out) const;
  OccupancyTrace simulate_occupancy(const ParameterSet& params) const;

  struct SegmentPlan {
    double t_start = 0.0;
    double t_end = 0.0;
    double v_start = 0.0;
    double v_end = 0.0;
    bool step = true;
    std::size_t first = 0;  // first observation index owned by the segment
    std::size_t last = 0;   // one past the last
  };

  struct Entry {
    int row;
    int col;
    double coeff;
  };

  /// Reduced coordinates keep every state except `eliminated`, in order,
  /// followed by a constant 1 that carries the affine term.
  std::size_t eliminated_state() const noexcept { return eliminated_; }

 private:
  template <int Dim>
  friend struct SimulationKernel;

  template <typename Sink>
  void run(const ParameterSet& params, Sink&& sink) const;

  MarkovModel model_;
  Protocol protocol_;
  SimulationSettings settings_;
  std::vector<double> times_;
  std::vector<SegmentPlan> segments_;
  std::size_t eliminated_ = 0;
  std::vector<int> reduced_index_;                // full -> reduced (-1 for eliminated)
  std::vector<std::vector<Entry>> contributions_; // per transition, into the augmented matrix
};

/// Convenience wrapper building a one-off Simulator.
Trace simulate(const MarkovModel& model, const ParameterSet& params, const Protocol& protocol,
               const SimulationSettings& settings = {});

/// z_i = y_i + eps_i with eps_i ~ N(0, sigma^2), reproducible from the seed.
Trace generate_data(const MarkovModel& model, const ParameterSet& params, const Protocol& protocol,
                    const NoiseSpec& noise, const SimulationSettings& settings = {});

/// Adds seeded Gaussian noise to a noise-free trace in place and records it in meta.
void add_noise(Trace& trace, const NoiseSpec& noise);

/// Content hash of a parameter vector, as stored in trace metadata.
std::string parameter_hash(const ParameterSet& params);

}  // namespace ionfit
