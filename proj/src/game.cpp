#include "storage_market/game.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace storage_market {

namespace {

/// Clearing-regime summary around a fixed strategy profile, used to anchor
/// the closed-form best responses.
struct Regime {
  double price = 0.0;
  double part_supply = 0.0;        // participating sellers' total offer
  double part_demand = 0.0;        // participating buyers' total demand
  std::size_t supplier_count = 0;  // participating sellers (positive offers)
  bool seller_in = false;          // queried seller participates
};

std::optional<Regime> current_regime(const MarketInstance& market,
                                     std::span<const double> offers, std::size_t seller,
                                     ClearScratch& scratch) {
  const std::size_t nb = market.n_buyers();
  scratch.demands.resize(nb);
  for (std::size_t k = 0; k < nb; ++k) scratch.demands[k] = market.buyers[k].demand;
  const auto is = find_intersection(market, offers, scratch.demands);
  if (!is) return std::nullopt;

  Regime r;
  r.price = trading_price(market, is->marginal_seller, is->marginal_buyer);
  for (std::size_t i = 0; i < is->marginal_seller; ++i) {
    if (offers[i] > kQuantityTol) {
      r.part_supply += offers[i];
      ++r.supplier_count;
      if (i == seller) r.seller_in = true;
    }
  }
  for (std::size_t k = 0; k < is->marginal_buyer; ++k)
    if (scratch.demands[k] > kQuantityTol) r.part_demand += scratch.demands[k];
  return r;
}

void engine_check_weight(double w) {
  if (!(w >= 0.0) || !(w < 1.0))
    throw InvalidConfigError("inertia weight " + std::to_string(w) +
                             " is outside [0, 1)");
}

/// Two closed-form deviation candidates for one seller at the incumbent
/// profile, clamped into [0, bound]; used by verify_nash in addition to the
/// plain grid so stationary points between grid nodes are not missed.
void closed_form_candidates(const MarketInstance& market, std::span<const double> offers,
                            std::size_t seller, const Regime& regime,
                            std::vector<double>& out) {
  const auto& prof = market.sellers[seller];
  const double margin = regime.price - prof.reservation_price;
  out.push_back(std::clamp(margin / (2.0 * prof.cost_weight), 0.0, prof.capacity_bound));
  if (regime.supplier_count >= 2 && regime.seller_in) {
    const double n = static_cast<double>(regime.supplier_count);
    const double others = regime.part_supply - offers[seller];
    const double c =
        (margin * n + 2.0 * prof.cost_weight * (others - regime.part_demand)) /
        (2.0 * prof.cost_weight * (n - 1.0));
    out.push_back(std::clamp(c, 0.0, prof.capacity_bound));
  }
}

}  // namespace

void GameConfig::validate(std::size_t n_sellers) const {
  if (!(inertia_weight > 0.0) || !(inertia_weight < 1.0))
    throw InvalidConfigError("inertia weight must lie strictly in (0, 1), got " +
                             std::to_string(inertia_weight));
  if (!(convergence_epsilon > 0.0))
    throw InvalidConfigError("convergence epsilon must be positive");
  if (max_iterations == 0) throw InvalidConfigError("max iterations must be at least 1");
  if (best_response_grid < 2)
    throw InvalidConfigError("best-response grid needs at least 2 points");
  if (!(nash_tolerance > 0.0)) throw InvalidConfigError("nash tolerance must be positive");
  if (!sequential_order.empty()) {
    if (sequential_order.size() != n_sellers)
      throw InvalidConfigError("sequential order must list every seller exactly once");
    std::vector<bool> seen(n_sellers, false);
    for (std::size_t i : sequential_order) {
      if (i >= n_sellers || seen[i])
        throw InvalidConfigError("sequential order must be a permutation of the sellers");
      seen[i] = true;
    }
  }
  if (!initial_offers.empty() && initial_offers.size() != n_sellers)
    throw InvalidConfigError("initial offers must match the seller count");
}

double best_response(const MarketInstance& market, std::span<const double> offers,
                     std::size_t seller, const GameConfig& config, GameScratch& scratch) {
  const auto& prof = market.sellers[seller];
  const double bound = prof.capacity_bound;
  const std::size_t grid = std::max<std::size_t>(config.best_response_grid, 2);

  // Regime at the incumbent profile, before the trial buffer varies it.
  const auto regime = current_regime(market, offers, seller, scratch.clear);

  scratch.trial.assign(offers.begin(), offers.end());
  double best_offer = 0.0;
  double best_utility = -std::numeric_limits<double>::infinity();
  auto consider = [&](double a) {
    scratch.trial[seller] = a;
    const double u = utility(market, scratch.trial, seller, scratch.clear);
    if (u > best_utility) {
      best_utility = u;
      best_offer = a;
    }
  };

  const double step = bound / static_cast<double>(grid - 1);
  for (std::size_t g = 0; g < grid; ++g)
    consider(std::min(bound, static_cast<double>(g) * step));

  // One refinement pass between the coarse neighbours of the argmax.
  const double lo = std::max(0.0, best_offer - step);
  const double hi = std::min(bound, best_offer + step);
  const double fine = (hi - lo) / static_cast<double>(grid - 1);
  if (fine > 0.0)
    for (std::size_t g = 0; g < grid; ++g)
      consider(std::min(hi, lo + static_cast<double>(g) * fine));

  if (regime && regime->seller_in) {
    const double margin = regime->price - prof.reservation_price;
    std::optional<double> closed;
    if (regime->part_supply <= regime->part_demand + kQuantityTol) {
      // Covered supply: the seller trades its full offer, so the quadratic
      // optimum is the unconstrained stationary point.
      closed = margin / (2.0 * prof.cost_weight);
    } else if (regime->supplier_count >= 2) {
      // Oversupply with n suppliers: selling a_i - (supply - demand) / n,
      // the stationary offer targets the same quantity through the burden.
      const double n = static_cast<double>(regime->supplier_count);
      const double others = regime->part_supply - offers[seller];
      closed = (margin * n + 2.0 * prof.cost_weight * (others - regime->part_demand)) /
               (2.0 * prof.cost_weight * (n - 1.0));
    }
    // A lone oversupplied seller has no stationary point; the grid decides.
    if (closed) {
      const double c = std::clamp(*closed, 0.0, bound);
      if (std::abs(c - best_offer) <= config.convergence_epsilon) return c;
    }
  }
  return best_offer;
}

StrategyVector step_sequential(const MarketInstance& market, const StrategyVector& offers,
                               const GameConfig& config, GameScratch& scratch) {
  StrategyVector next = offers;
  const double w = config.inertia_weight;
  auto update = [&](std::size_t i) {
    const double r = best_response(market, next, i, config, scratch);
    next[i] =
        std::clamp(inertia_blend(w, next[i], r), 0.0, market.sellers[i].capacity_bound);
  };
  if (config.sequential_order.empty()) {
    for (std::size_t i = 0; i < next.size(); ++i) update(i);
  } else {
    for (std::size_t i : config.sequential_order) update(i);
  }
  return next;
}

StrategyVector step_parallel(const MarketInstance& market, const StrategyVector& offers,
                             const GameConfig& config, GameScratch& scratch) {
  StrategyVector next = offers;
  const double w = config.inertia_weight;
  for (std::size_t i = 0; i < next.size(); ++i) {
    const double r = best_response(market, offers, i, config, scratch);
    next[i] = std::clamp(inertia_blend(w, offers[i], r), 0.0,
                         market.sellers[i].capacity_bound);
  }
  return next;
}

DynamicsTrace run_dynamics(const MarketInstance& market, const GameConfig& config) {
  engine_check_weight(config.inertia_weight);
  const std::size_t n = market.n_sellers();
  if (!config.initial_offers.empty() && config.initial_offers.size() != n)
    throw InvalidConfigError("initial offers must match the seller count");

  DynamicsTrace trace;
  trace.initial_offers =
      config.initial_offers.empty() ? market.capacity_bounds() : config.initial_offers;
  for (std::size_t i = 0; i < n; ++i)
    trace.initial_offers[i] =
        std::clamp(trace.initial_offers[i], 0.0, market.sellers[i].capacity_bound);

  GameScratch scratch;
  StrategyVector offers = trace.initial_offers;
  trace.iterations.reserve(std::min<std::size_t>(config.max_iterations, 64));

  for (std::size_t t = 0; t < config.max_iterations; ++t) {
    StrategyVector next = config.mode == StepMode::sequential
                              ? step_sequential(market, offers, config, scratch)
                              : step_parallel(market, offers, config, scratch);
    double delta = 0.0;
    for (std::size_t i = 0; i < n; ++i) delta = std::max(delta, std::abs(next[i] - offers[i]));
    offers = std::move(next);

    IterationRecord rec;
    rec.offers = offers;
    const AuctionOutcome out = clear_market(market, offers);
    rec.price = out.trading_price;
    rec.utilities.resize(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (out.sold[i] > kQuantityTol) {
        const auto& s = market.sellers[i];
        rec.utilities[i] = (*out.trading_price - s.reservation_price) * out.sold[i] -
                           s.cost_weight * out.sold[i] * out.sold[i];
      }
    }
    trace.iterations.push_back(std::move(rec));
    trace.iterations_used = t + 1;
    if (delta < config.convergence_epsilon) {
      trace.converged = true;
      break;
    }
  }

  const AuctionOutcome final_out = clear_market(market, offers);
  for (std::size_t i = 0; i < n; ++i)
    if (final_out.sold[i] <= kQuantityTol) trace.nonparticipants.push_back(i);
  return trace;
}

NashReport verify_nash(const MarketInstance& market, std::span<const double> offers,
                       std::size_t grid_points, double nash_tolerance) {
  const std::size_t n = market.n_sellers();
  const std::size_t grid = std::max<std::size_t>(grid_points, 201);

  GameScratch scratch;
  NashReport report;
  report.is_nash = true;
  report.worst_gain = -std::numeric_limits<double>::infinity();

  std::vector<double> candidates;
  for (std::size_t i = 0; i < n; ++i) {
    const double bound = market.sellers[i].capacity_bound;
    const double current_u = utility(market, offers, i, scratch.clear);

    candidates.clear();
    const double step = bound / static_cast<double>(grid - 1);
    for (std::size_t g = 0; g < grid; ++g)
      candidates.push_back(std::min(bound, static_cast<double>(g) * step));
    candidates.push_back(std::clamp(offers[i], 0.0, bound));
    if (const auto regime = current_regime(market, offers, i, scratch.clear))
      closed_form_candidates(market, offers, i, *regime, candidates);

    scratch.trial.assign(offers.begin(), offers.end());
    double best_u = -std::numeric_limits<double>::infinity();
    for (double a : candidates) {
      scratch.trial[i] = a;
      best_u = std::max(best_u, utility(market, scratch.trial, i, scratch.clear));
    }

    const double gain = best_u - current_u;
    const double tol = nash_tolerance * std::max(1.0, std::abs(current_u));
    if (gain > report.worst_gain) {
      report.worst_gain = gain;
      report.worst_seller = i;
      report.worst_tolerance = tol;
    }
    if (gain > tol) report.is_nash = false;
  }
  if (n == 0) report.worst_gain = 0.0;
  return report;
}

double select_weight(const MarketInstance& market, const GameConfig& base,
                     std::size_t probes) {
  if (probes == 0) throw InvalidConfigError("select_weight needs at least one probe");
  double lo = 0.0;
  double hi = 1.0;
  std::optional<double> best;
  for (std::size_t p = 0; p < probes; ++p) {
    const double mid = 0.5 * (lo + hi);
    GameConfig probe = base;
    probe.inertia_weight = mid;
    const DynamicsTrace trace = run_dynamics(market, probe);
    if (trace.converged) {
      best = best ? std::min(*best, mid) : mid;
      hi = mid;  // converged: look for a lighter damping
    } else {
      lo = mid;
    }
  }
  if (!best)
    throw NoConvergentWeightError("no probed inertia weight converged within " +
                                  std::to_string(base.max_iterations) + " iterations");
  return *best;
}

}  // namespace storage_market
