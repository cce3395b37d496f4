#pragma once

#include <complex>
#include <cstdint>
#include <vector>

namespace mdsse {

// Radial single-phase-equivalent feeder. Bus 0 is the substation (slack,
// fixed 1.0 p.u. at angle 0); line i connects parent[i+1] -> i+1.
struct FeederCase {
  int64_t n_buses = 0;
  std::vector<int64_t> parent;            // parent[b], b >= 1; parent[0] = -1
  std::vector<std::complex<double>> z_line;  // z_line[b] for line into bus b
  std::vector<double> base_load_p;        // p.u., 0 at root
  std::vector<double> q_ratio;            // Q = q_ratio * P per bus
  std::vector<double> load_morning_w, load_evening_w, load_phase_h;
  std::vector<double> pv_capacity;        // p.u., 0 where no PV
  double pv_fraction = 0.0;
  uint64_t seed = 0;
};

FeederCase generate_case(int64_t n_buses, double pv_fraction, uint64_t seed);

// Quasi-static ground truth: one power-flow solution per step.
struct GroundTruthSeries {
  int64_t n_buses = 0;
  double dt_minutes = 0.0;
  int64_t n_steps = 0;
  // Row-major [step, bus] / [step, line].
  std::vector<double> vm, va;        // voltage magnitude (p.u.), angle (rad)
  std::vector<double> p_inj, q_inj;  // net bus injection (p.u., generation +)
  std::vector<double> i_line;        // line current magnitude (p.u.)
  std::vector<double> residual;      // max bus power-balance residual per step

  int64_t channels() const { return 5 * n_buses - 1; }
  // Packs [vm, va, p, q, i] for one step.
  std::vector<double> frame(int64_t step) const;
};

// resolution_minutes must be one of {1, 2, 5, 15}. Throws on power-flow
// non-convergence (names the failing step).
GroundTruthSeries simulate(const FeederCase& c, int64_t days,
                           int64_t resolution_minutes, uint64_t seed);

// Noisy partial observations with a fixed sensor placement. Channel layout
// matches GroundTruthSeries::frame: [vm, va, p, q, i_line].
struct MeasurementSeries {
  int64_t n_buses = 0;
  double dt_minutes = 0.0;
  int64_t n_steps = 0;
  double observability = 0.0;
  std::vector<uint8_t> bus_mask;    // [n_buses]
  std::vector<uint8_t> line_mask;   // [n_buses-1]: line observed iff child bus is
  std::vector<double> sigma_v;      // per-bus magnitude sigma (relative)
  double sigma_pq = 0.0, sigma_i = 0.0;  // relative
  std::vector<double> values;       // [step, channel], zero at unobserved
  std::vector<uint8_t> channel_mask;  // [channels]

  int64_t channels() const { return 5 * n_buses - 1; }
};

MeasurementSeries observe(const GroundTruthSeries& truth, double observability,
                          uint64_t noise_seed);

// Stride decimation (every factor-th frame, remainder truncated).
GroundTruthSeries resample(const GroundTruthSeries& s, int64_t factor);
MeasurementSeries resample(const MeasurementSeries& s, int64_t factor);

// Exposed for tests: the deterministic daily load shape and clear-sky curve.
double daily_load_shape(double hour, double morning_w, double evening_w,
                        double phase_h);
double clear_sky(double hour);

// Independent bus power-balance residual from a voltage solution; used by
// the solver's convergence check and re-checked by tests.
double max_power_balance_residual(const FeederCase& c,
                                  const std::vector<std::complex<double>>& v,
                                  const std::vector<std::complex<double>>& s_inj);

// One power-flow solve by backward/forward sweep (exposed for tests).
std::vector<std::complex<double>> solve_power_flow(
    const FeederCase& c, const std::vector<std::complex<double>>& s_inj,
    double tol = 1e-10, int max_iters = 200);

}  // namespace mdsse
