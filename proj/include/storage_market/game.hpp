#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "storage_market/market.hpp"

namespace storage_market {

class InvalidConfigError : public MarketError {
 public:
  using MarketError::MarketError;
};

/// No probed inertia weight produced a converged run.
class NoConvergentWeightError : public MarketError {
 public:
  using MarketError::MarketError;
};

enum class StepMode { sequential, parallel };

/// Knobs for the best-response dynamics.
struct GameConfig {
  /// Inertia weight w: next offer = (1 - w) * response + w * current.
  /// The engine also accepts w = 0 (undamped classical best response) for
  /// baseline comparisons; validate() enforces the damped range (0, 1).
  double inertia_weight = 0.5;
  /// Convergence threshold on max |offer change| per iteration, in MWh.
  double convergence_epsilon = 1e-4;
  std::size_t max_iterations = 500;
  StepMode mode = StepMode::sequential;
  /// Points per best-response grid pass (a second refinement pass around the
  /// first argmax uses the same count).
  std::size_t best_response_grid = 201;
  /// Relative per-seller deviation-gain tolerance for equilibrium checks,
  /// scaled by max(1, |utility|).
  double nash_tolerance = 1e-6;
  /// Update order for sequential steps; empty means ascending seller index.
  std::vector<std::size_t> sequential_order;
  /// Starting offers; empty means every seller offers its capacity bound.
  std::vector<double> initial_offers;

  /// Strict validation for user-facing solves. Throws InvalidConfigError.
  void validate(std::size_t n_sellers) const;
};

/// Offers, clearing price, and utilities after one iteration.
struct IterationRecord {
  StrategyVector offers;
  std::optional<double> price;
  std::vector<double> utilities;
};

struct DynamicsTrace {
  StrategyVector initial_offers;
  std::vector<IterationRecord> iterations;
  bool converged = false;
  std::size_t iterations_used = 0;
  /// Sellers whose final cleared quantity is zero.
  std::vector<std::size_t> nonparticipants;

  const IterationRecord& last() const { return iterations.back(); }
};

/// Reusable buffers for repeated best-response evaluations.
struct GameScratch {
  StrategyVector trial;
  ClearScratch clear;
};

inline double inertia_blend(double w, double current, double response) {
  return (1.0 - w) * response + w * current;
}

/// Best response of one seller to the others' offers (the seller's own entry
/// in `offers` only anchors the closed-form regime). Evaluated on a grid over
/// [0, capacity_bound] plus one refinement pass around the first argmax; ties
/// keep the lowest offer. When the current clearing regime admits a
/// closed-form optimum (matched supply: (p - s_i) / (2 tau_i); oversupply
/// with at least two supplying sellers: the equal-burden stationary point)
/// and it lands within convergence_epsilon of the grid argmax, the closed
/// form is returned; otherwise the grid wins.
double best_response(const MarketInstance& market, std::span<const double> offers,
                     std::size_t seller, const GameConfig& config, GameScratch& scratch);

/// One round of updates in ascending (or configured) order; each seller sees
/// the already-updated offers of its predecessors.
StrategyVector step_sequential(const MarketInstance& market, const StrategyVector& offers,
                               const GameConfig& config, GameScratch& scratch);

/// One round of simultaneous updates; every seller responds to the same
/// snapshot.
StrategyVector step_parallel(const MarketInstance& market, const StrategyVector& offers,
                             const GameConfig& config, GameScratch& scratch);

/// Iterates inertia-weighted best-response dynamics from the configured start
/// until max |offer change| < convergence_epsilon or max_iterations is hit.
/// The trace records every iteration; converged=false signals the cap.
DynamicsTrace run_dynamics(const MarketInstance& market, const GameConfig& config);

struct NashReport {
  bool is_nash = false;
  double worst_gain = 0.0;        // largest deviation gain found
  std::size_t worst_seller = 0;   // seller attaining worst_gain
  double worst_tolerance = 0.0;   // tolerance applied to that seller
};

/// Certifies a strategy profile by grid search per seller (at least 201
/// points over [0, bound], plus the current offer and both closed-form
/// candidates). A profile fails when any seller can gain more than
/// nash_tolerance * max(1, |current utility|).
NashReport verify_nash(const MarketInstance& market, std::span<const double> offers,
                       std::size_t grid_points = 201, double nash_tolerance = 1e-6);

/// Bisects (0, 1) for a workable inertia weight: `probes` dynamics runs,
/// moving toward smaller w on success. Returns the smallest tested w whose
/// run converged; throws NoConvergentWeightError if none did.
double select_weight(const MarketInstance& market, const GameConfig& base,
                     std::size_t probes = 8);

}  // namespace storage_market
