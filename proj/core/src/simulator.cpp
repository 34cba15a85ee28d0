#include "ionfit/simulator.hpp"

#include "ionfit/errors.hpp"
#include "ionfit/expm.hpp"
#include "text_util.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace ionfit {

Simulator::Simulator(MarkovModel model, Protocol protocol, SimulationSettings settings)
    : model_(std::move(model)), protocol_(std::move(protocol)), settings_(settings) {
  const auto& tol = settings_.tolerances;
  if (!(tol.abs > 0.0) || !(tol.rel >= 0.0)) throw DomainError("solver tolerances must be positive");

  times_ = protocol_.observation_times();

  // Eliminate the highest-indexed non-conducting state.
  const std::size_t n = model_.n_states();
  eliminated_ = n - 1;
  if (eliminated_ == model_.conducting_state()) --eliminated_;
  reduced_index_.assign(n, -1);
  for (std::size_t k = 0, r = 0; k < n; ++k) {
    if (k != eliminated_) reduced_index_[k] = static_cast<int>(r++);
  }
  const int affine_col = static_cast<int>(n) - 1;

  // With x_e = 1 - sum(y): B(r, j) = A(r, j) - A(r, e) and c(r) = A(r, e).
  auto push_entry = [&](std::vector<Entry>& out, std::size_t row, std::size_t col, double coeff) {
    if (row == eliminated_) return;
    const int r = reduced_index_[row];
    if (col == eliminated_) {
      out.push_back({r, affine_col, coeff});
      for (std::size_t j = 0; j < n; ++j) {
        if (j != eliminated_) out.push_back({r, reduced_index_[j], -coeff});
      }
    } else {
      out.push_back({r, reduced_index_[col], coeff});
    }
  };
  for (const auto& t : model_.transitions()) {
    std::vector<Entry> entries;
    push_entry(entries, t.to, t.from, 1.0);
    push_entry(entries, t.from, t.from, -1.0);
    contributions_.push_back(std::move(entries));
  }

  const auto& segs = protocol_.segments();
  segments_.resize(segs.size());
  for (std::size_t s = 0; s < segs.size(); ++s) {
    auto& plan = segments_[s];
    plan.t_start = protocol_.segment_start(s);
    plan.t_end = protocol_.segment_start(s + 1);
    plan.v_start = segs[s].v_start;
    plan.v_end = segs[s].v_end;
    plan.step = segs[s].is_step();
    plan.first = plan.last = 0;
  }
  std::size_t i = 0;
  for (std::size_t s = 0; s < segs.size(); ++s) {
    segments_[s].first = i;
    while (i < times_.size() && protocol_.segment_index_at(times_[i]) == s) ++i;
    segments_[s].last = i;
  }
}

template <int Dim>
struct SimulationKernel {
  using Mat = Eigen::Matrix<double, Dim, Dim>;
  using Vec = Eigen::Matrix<double, Dim, 1>;

  struct BoundRate {
    double prefactor;
    double slope;  // sign * exponent coefficient, 0 for constant rates
  };

  const Simulator& sim;
  int n;
  std::vector<BoundRate> rates;
  double dt;
  long budget;

  SimulationKernel(const Simulator& s, const ParameterSet& params)
      : sim(s), n(static_cast<int>(s.model_.n_states())) {
    for (const auto& r : s.model_.bind_rates(params)) {
      rates.push_back({r.prefactor, r.kind == RateKind::exponential ? r.sign * r.exponent_coeff : 0.0});
    }
    dt = 1000.0 / s.protocol_.sample_rate();
    budget = 10'000 + 50 * static_cast<long>(s.times_.size());
  }

  Mat generator(double v) const {
    Mat m = Mat::Zero(n, n);
    for (std::size_t t = 0; t < rates.size(); ++t) {
      const double k = rates[t].slope == 0.0 ? rates[t].prefactor
                                              : rates[t].prefactor * std::exp(rates[t].slope * v);
      for (const auto& e : sim.contributions_[t]) m(e.row, e.col) += k * e.coeff;
    }
    return m;
  }

  static double ramp_voltage(const Simulator::SegmentPlan& seg, double t) {
    return seg.v_start + (seg.v_end - seg.v_start) * ((t - seg.t_start) / (seg.t_end - seg.t_start));
  }

  // Generator and its time derivative along a ramp with slope dv/dt.
  void generator_pair(double v, double dvdt, Mat& m, Mat& mdot) const {
    m.setZero(n, n);
    mdot.setZero(n, n);
    for (std::size_t t = 0; t < rates.size(); ++t) {
      const double k = rates[t].slope == 0.0 ? rates[t].prefactor
                                              : rates[t].prefactor * std::exp(rates[t].slope * v);
      const double kdot = k * rates[t].slope * dvdt;
      for (const auto& e : sim.contributions_[t]) {
        m(e.row, e.col) += k * e.coeff;
        mdot(e.row, e.col) += kdot * e.coeff;
      }
    }
  }

  // One step of the L-stable Rodas4 Rosenbrock scheme (Hairer & Wanner
  // coefficients). Returns the new state and the embedded error vector.
  void rosenbrock_step(const Vec& y, const Simulator::SegmentPlan& seg, double t, double h, Vec& out,
                       Vec& err) const {
    static constexpr double gamma = 0.25;
    static constexpr double d1 = 0.25, d2 = -0.1043, d3 = 0.1035, d4 = -0.3620000000000023e-01;
    static constexpr double c2 = 0.386, c3 = 0.21, c4 = 0.63;
    static constexpr double c21 = -0.5668800000000000e+01;
    static constexpr double a21 = 0.1544000000000000e+01;
    static constexpr double c31 = -0.2430093356833875e+01, c32 = -0.2063599157091915e+00;
    static constexpr double a31 = 0.9466785280815826e+00, a32 = 0.2557011698983284e+00;
    static constexpr double c41 = -0.1073529058151375e+00, c42 = -0.9594562251023355e+01,
                            c43 = -0.2047028614809616e+02;
    static constexpr double a41 = 0.3314825187068521e+01, a42 = 0.2896124015972201e+01,
                            a43 = 0.9986419139977817e+00;
    static constexpr double c51 = 0.7496443313967647e+01, c52 = -0.1024680431464352e+02,
                            c53 = -0.3399990352819905e+02, c54 = 0.1170890893206160e+02;
    static constexpr double a51 = 0.1221224509226641e+01, a52 = 0.6019134481288629e+01,
                            a53 = 0.1253708332932087e+02, a54 = -0.6878860361058950e+00;
    static constexpr double c61 = 0.8083246795921522e+01, c62 = -0.7981132988064893e+01,
                            c63 = -0.3152159432874371e+02, c64 = 0.1631930543123136e+02,
                            c65 = -0.6058818238834054e+01;

    const double dvdt = (seg.v_end - seg.v_start) / (seg.t_end - seg.t_start);
    Mat m(n, n), mdot(n, n);
    generator_pair(ramp_voltage(seg, t), dvdt, m, mdot);
    const Vec ft = mdot * y;
    Mat w = -m;
    w.diagonal().array() += 1.0 / (gamma * h);
    const Eigen::PartialPivLU<Mat> lu(w);

    auto f = [&](double tau, const Vec& x) -> Vec { return generator(ramp_voltage(seg, tau)) * x; };

    const Vec g1 = lu.solve(m * y + (h * d1) * ft);
    Vec x = y + a21 * g1;
    const Vec g2 = lu.solve(f(t + c2 * h, x) + (h * d2) * ft + (c21 / h) * g1);
    x = y + a31 * g1 + a32 * g2;
    const Vec g3 = lu.solve(f(t + c3 * h, x) + (h * d3) * ft + (c31 * g1 + c32 * g2) / h);
    x = y + a41 * g1 + a42 * g2 + a43 * g3;
    const Vec g4 = lu.solve(f(t + c4 * h, x) + (h * d4) * ft + (c41 * g1 + c42 * g2 + c43 * g3) / h);
    x = y + a51 * g1 + a52 * g2 + a53 * g3 + a54 * g4;
    const Mat m_end = generator(ramp_voltage(seg, t + h));
    const Vec g5 = lu.solve(m_end * x + (c51 * g1 + c52 * g2 + c53 * g3 + c54 * g4) / h);
    x += g5;
    err = lu.solve(m_end * x + (c61 * g1 + c62 * g2 + c63 * g3 + c64 * g4 + c65 * g5) / h);
    out = x + err;
  }

  void integrate_ramp(Vec& y, const Simulator::SegmentPlan& seg, std::size_t seg_index, double t,
                      double t_target, double& h_suggest) {
    const auto& tol = sim.settings_.tolerances;
    const double snap = 1e-12 * std::max(1.0, std::abs(t_target));
    Vec next(n), delta(n);
    while (t_target - t > snap) {
      const double remaining = t_target - t;
      const bool truncated = h_suggest >= remaining;
      const double h = truncated ? remaining : h_suggest;

      rosenbrock_step(y, seg, t, h, next, delta);
      double err = 0.0;
      for (int i = 0; i + 1 < n; ++i) {
        const double scale = tol.abs + tol.rel * std::max(std::abs(y(i)), std::abs(next(i)));
        err = std::max(err, std::abs(delta(i)) / scale);
      }

      if (--budget < 0) {
        throw StiffnessError(seg_index, "ramp integration exceeded its step budget in segment " +
                                            std::to_string(seg_index));
      }
      if (err <= 1.0) {
        y = next;
        t = truncated ? t_target : t + h;
        const double factor = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.25), 0.2, 5.0);
        h_suggest = (truncated && factor >= 1.0) ? std::max(h_suggest, h * factor) : h * factor;
      } else {
        const double factor = std::isfinite(err) ? std::max(0.2, 0.9 * std::pow(err, -0.25)) : 0.2;
        h_suggest = h * factor;
        if (h_suggest < 1e-10) {
          throw StiffnessError(seg_index, "step size underflow in ramp segment " + std::to_string(seg_index));
        }
      }
    }
  }

  template <typename Sink>
  void run(const ParameterSet& params, Sink& sink) {
    const Eigen::VectorXd x0 = steady_state(sim.model_, params, sim.protocol_.holding_potential());
    Vec y(n);
    for (int k = 0; k < n; ++k) {
      const int r = sim.reduced_index_[static_cast<std::size_t>(k)];
      if (r >= 0) y(r) = x0(k);
    }
    y(n - 1) = 1.0;

    const auto& times = sim.times_;
    const double tiny = 1e-9 * dt;
    for (std::size_t s = 0; s < sim.segments_.size(); ++s) {
      const auto& seg = sim.segments_[s];
      if (seg.step) {
        const double v = seg.v_start;
        const Mat m = generator(v);
        if (seg.first == seg.last) {
          y = (expm(m * (seg.t_end - seg.t_start)) * y).eval();
          continue;
        }
        const double lead = times[seg.first] - seg.t_start;
        if (lead > tiny) y = (expm(m * lead) * y).eval();
        sink(seg.first, y, v);
        Mat p;
        const bool have_p = seg.last - seg.first > 1;
        if (have_p) {
          p = expm(m * dt);
          for (std::size_t i = seg.first + 1; i < seg.last; ++i) {
            y = (p * y).eval();
            sink(i, y, v);
          }
        }
        const double tail = seg.t_end - times[seg.last - 1];
        if (tail > tiny) {
          if (have_p && std::abs(tail - dt) <= tiny) {
            y = (p * y).eval();
          } else {
            y = (expm(m * tail) * y).eval();
          }
        }
      } else {
        double h_suggest = seg.first < seg.last ? dt : seg.t_end - seg.t_start;
        double t = seg.t_start;
        for (std::size_t i = seg.first; i < seg.last; ++i) {
          integrate_ramp(y, seg, s, t, times[i], h_suggest);
          t = times[i];
          sink(i, y, ramp_voltage(seg, t));
        }
        integrate_ramp(y, seg, s, t, seg.t_end, h_suggest);
      }
    }
  }
};

template <typename Sink>
void Simulator::run(const ParameterSet& params, Sink&& sink) const {
  model_.validate(params);
  switch (model_.n_states()) {
    case 2: { SimulationKernel<2> k(*this, params); k.run(params, sink); break; }
    case 3: { SimulationKernel<3> k(*this, params); k.run(params, sink); break; }
    case 4: { SimulationKernel<4> k(*this, params); k.run(params, sink); break; }
    case 5: { SimulationKernel<5> k(*this, params); k.run(params, sink); break; }
    case 6: { SimulationKernel<6> k(*this, params); k.run(params, sink); break; }
    default: { SimulationKernel<Eigen::Dynamic> k(*this, params); k.run(params, sink); break; }
  }
}

void Simulator::simulate_current(const ParameterSet& params, std::span<double> out) const {
  if (out.size() != times_.size()) throw AlignmentError("output span does not match the observation grid");
  const int open = reduced_index_[model_.conducting_state()];
  const double g = params.conductance;
  const double e_rev = settings_.reversal_potential;
  run(params, [&](std::size_t i, const auto& y, double v) { out[i] = g * y(open) * (v - e_rev); });
}

Trace Simulator::simulate(const ParameterSet& params) const {
  Trace trace;
  trace.times = times_;
  trace.values.resize(times_.size());
  simulate_current(params, trace.values);
  trace.meta.model = model_.name();
  trace.meta.protocol = protocol_.name();
  trace.meta.params = params.flat();
  trace.meta.params_hash = parameter_hash(params);
  trace.meta.tolerances = settings_.tolerances;
  trace.meta.reversal_potential = settings_.reversal_potential;
  return trace;
}

OccupancyTrace Simulator::simulate_occupancy(const ParameterSet& params) const {
  OccupancyTrace occ;
  occ.times = times_;
  const auto n = static_cast<Eigen::Index>(model_.n_states());
  occ.states.resize(static_cast<Eigen::Index>(times_.size()), n);
  run(params, [&](std::size_t i, const auto& y, double) {
    const auto row = static_cast<Eigen::Index>(i);
    double sum = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      const int r = reduced_index_[static_cast<std::size_t>(k)];
      if (r >= 0) {
        occ.states(row, k) = y(r);
        sum += y(r);
      }
    }
    occ.states(row, static_cast<Eigen::Index>(eliminated_)) = 1.0 - sum;
  });
  return occ;
}

Trace simulate(const MarkovModel& model, const ParameterSet& params, const Protocol& protocol,
               const SimulationSettings& settings) {
  return Simulator(model, protocol, settings).simulate(params);
}

void add_noise(Trace& trace, const NoiseSpec& noise) {
  if (!(noise.sigma >= 0.0)) throw DomainError("noise sigma must be non-negative");
  if (noise.sigma > 0.0) {
    std::mt19937_64 rng(noise.seed);
    std::normal_distribution<double> eps(0.0, noise.sigma);
    for (double& v : trace.values) v += eps(rng);
  }
  trace.meta.seed = noise.seed;
  trace.meta.sigma = noise.sigma;
  trace.meta.rng = kNoiseAlgorithm;
}

Trace generate_data(const MarkovModel& model, const ParameterSet& params, const Protocol& protocol,
                    const NoiseSpec& noise, const SimulationSettings& settings) {
  Trace trace = simulate(model, params, protocol, settings);
  add_noise(trace, noise);
  return trace;
}

std::string parameter_hash(const ParameterSet& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : params.flat()) h = fnv1a(format_double(v) + ";", h);
  return hex64(h);
}

}  // namespace ionfit
