#include "storage_market/harness.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "storage_market/greedy.hpp"
#include "storage_market/rng.hpp"

namespace storage_market {

namespace {

// Stream ids keep the generator lanes of one seed independent.
constexpr std::uint64_t kProfileStream = 0;
constexpr std::uint64_t kFleetStream = 2;
constexpr std::uint64_t kPeriodStreamBase = 10;

void check_interval(const Interval& iv, const char* what, bool positive_lo) {
  if (!(iv.lo <= iv.hi))
    throw InvalidSpecError(std::string(what) + " range is inverted");
  if (positive_lo ? !(iv.lo > 0.0) : !(iv.lo >= 0.0))
    throw InvalidSpecError(std::string(what) + " range must be positive");
}

/// Uniform draw that avoids exact collisions with earlier draws, so sorted
/// profiles stay strict and no agents merge.
double draw_distinct(CounterRng& rng, const Interval& iv, const std::vector<double>& taken) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    const double v = rng.uniform(iv.lo, iv.hi);
    if (std::find(taken.begin(), taken.end(), v) == taken.end()) return v;
  }
  throw InvalidSpecError("could not draw a distinct value; range is degenerate");
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

void InstanceSpec::validate() const {
  if (n_sellers == 0) throw InvalidSpecError("instance spec needs at least one seller");
  if (n_buyers == 0) throw InvalidSpecError("instance spec needs at least one buyer");
  check_interval(surplus_range, "surplus", true);
  check_interval(seller_price_range, "seller price", false);
  check_interval(buyer_bid_range, "buyer bid", false);
  check_interval(demand_range, "demand", true);
  if (!(cost_weight > 0.0)) throw InvalidSpecError("cost weight must be positive");
}

std::pair<std::vector<SellerProfile>, std::vector<BuyerProfile>> generate_profiles(
    const InstanceSpec& spec) {
  spec.validate();
  CounterRng rng(spec.seed, kProfileStream);

  std::vector<SellerProfile> sellers;
  std::vector<double> prices;
  sellers.reserve(spec.n_sellers);
  for (std::size_t i = 0; i < spec.n_sellers; ++i) {
    SellerProfile s;
    s.id = "s" + std::to_string(i + 1);
    s.reservation_price = draw_distinct(rng, spec.seller_price_range, prices);
    prices.push_back(s.reservation_price);
    s.capacity_bound = rng.uniform(spec.surplus_range.lo, spec.surplus_range.hi);
    s.cost_weight = spec.cost_weight;
    sellers.push_back(std::move(s));
  }

  std::vector<BuyerProfile> buyers;
  std::vector<double> bids;
  buyers.reserve(spec.n_buyers);
  for (std::size_t k = 0; k < spec.n_buyers; ++k) {
    BuyerProfile b;
    b.id = "b" + std::to_string(k + 1);
    b.reservation_bid = draw_distinct(rng, spec.buyer_bid_range, bids);
    bids.push_back(b.reservation_bid);
    b.demand = rng.uniform(spec.demand_range.lo, spec.demand_range.hi);
    buyers.push_back(std::move(b));
  }

  return {std::move(sellers), std::move(buyers)};
}

MarketInstance generate_instance(const InstanceSpec& spec) {
  const auto [sellers, buyers] = generate_profiles(spec);
  return canonicalize_market(sellers, buyers);
}

std::string_view algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::sequential: return "sequential";
    case Algorithm::parallel: return "parallel";
    case Algorithm::greedy: return "greedy";
    case Algorithm::best_response_raw: return "best-response-raw";
  }
  return "unknown";
}

std::optional<Algorithm> algorithm_from_name(std::string_view name) {
  if (name == "sequential" || name == "seq") return Algorithm::sequential;
  if (name == "parallel" || name == "par") return Algorithm::parallel;
  if (name == "greedy") return Algorithm::greedy;
  if (name == "best-response-raw" || name == "raw") return Algorithm::best_response_raw;
  return std::nullopt;
}

GameConfig ExperimentConfig::game_config(Algorithm a) const {
  GameConfig cfg;
  cfg.convergence_epsilon = convergence_epsilon;
  cfg.max_iterations = max_iterations;
  cfg.best_response_grid = best_response_grid;
  switch (a) {
    case Algorithm::sequential:
      cfg.inertia_weight = sequential_weight;
      cfg.mode = StepMode::sequential;
      break;
    case Algorithm::parallel:
      cfg.inertia_weight = parallel_weight;
      cfg.mode = StepMode::parallel;
      break;
    case Algorithm::best_response_raw:
      cfg.inertia_weight = 0.0;  // classical undamped best response
      cfg.mode = StepMode::sequential;
      break;
    case Algorithm::greedy:
      throw InvalidConfigError("greedy baseline has no dynamics configuration");
  }
  return cfg;
}

ExperimentReport run_experiment(const std::vector<InstanceSpec>& grid,
                                const std::vector<Algorithm>& algorithms,
                                std::size_t runs, const ExperimentConfig& config) {
  ExperimentReport report;
  if (runs == 0 || grid.empty() || algorithms.empty()) return report;

  for (std::size_t g = 0; g < grid.size(); ++g) {
    const InstanceSpec& cell = grid[g];
    cell.validate();

    // One row of per-run values per algorithm, aggregated afterwards.
    std::vector<std::vector<double>> utilities(algorithms.size());
    std::vector<std::vector<double>> actions(algorithms.size());
    std::vector<std::vector<double>> iterations(algorithms.size());
    std::vector<std::size_t> converged_runs(algorithms.size(), 0);

    for (std::size_t r = 0; r < runs; ++r) {
      InstanceSpec draw = cell;
      // Depends on the run index only, so grid cells sharing a base seed
      // (a cost-weight sweep, say) replay the same markets.
      draw.seed = derive_seed(cell.seed, r);
      const MarketInstance market = generate_instance(draw);

      for (std::size_t a = 0; a < algorithms.size(); ++a) {
        RunRow row;
        row.grid_index = g;
        row.k = cell.n_buyers;
        row.n = cell.n_sellers;
        row.tau = cell.cost_weight;
        row.algorithm = algorithms[a];
        row.seed = draw.seed;
        row.run = r;

        if (algorithms[a] == Algorithm::greedy) {
          const GreedyResult res = run_greedy(market);
          row.mean_utility = mean_of(res.utilities);
          row.mean_action = mean_of(res.sold);
          row.converged = true;
        } else {
          const DynamicsTrace trace =
              run_dynamics(market, config.game_config(algorithms[a]));
          row.mean_utility = mean_of(trace.last().utilities);
          row.mean_action = mean_of(trace.last().offers);
          row.iterations = trace.iterations_used;
          row.converged = trace.converged;
        }

        utilities[a].push_back(row.mean_utility);
        actions[a].push_back(row.mean_action);
        iterations[a].push_back(static_cast<double>(row.iterations));
        if (row.converged) ++converged_runs[a];
        report.raw.push_back(std::move(row));
      }
    }

    for (std::size_t a = 0; a < algorithms.size(); ++a) {
      AggregateRow agg;
      agg.k = cell.n_buyers;
      agg.n = cell.n_sellers;
      agg.tau = cell.cost_weight;
      agg.algorithm = algorithms[a];
      agg.runs = runs;
      agg.converged_runs = converged_runs[a];
      agg.mean_utility = mean_of(utilities[a]);
      agg.std_utility = sample_std(utilities[a], agg.mean_utility);
      agg.mean_action = mean_of(actions[a]);
      agg.std_action = sample_std(actions[a], agg.mean_action);
      agg.mean_iterations = mean_of(iterations[a]);
      agg.std_iterations = sample_std(iterations[a], agg.mean_iterations);
      report.aggregates.push_back(agg);
    }
  }
  return report;
}

void BatteryState::validate() const {
  if (!(capacity_max > 0.0))
    throw InvalidSpecError("battery capacity must be positive");
  if (charge < 0.0 || charge > capacity_max)
    throw InvalidSpecError("battery charge must lie in [0, capacity]");
  if (reserve < 0.0 || reserve > capacity_max)
    throw InvalidSpecError("battery reserve must lie in [0, capacity]");
}

TimeSimResult run_time_dependent(std::vector<BatteryState> states,
                                 const TimeSimConfig& config) {
  if (states.empty()) throw InvalidSpecError("time simulation needs at least one battery");
  for (const auto& s : states) s.validate();
  check_interval(config.seller_price_range, "seller price", false);
  check_interval(config.buyer_bid_range, "buyer bid", false);
  if (!(config.cost_weight > 0.0)) throw InvalidSpecError("cost weight must be positive");

  const std::size_t players = states.size();
  TimeSimResult result;
  result.periods.reserve(config.periods);

  for (std::size_t t = 0; t < config.periods; ++t) {
    const std::uint64_t stream =
        kPeriodStreamBase + (config.redraw_prices ? t : 0);
    CounterRng rng(config.seed, stream);
    std::vector<double> price_draw(players), bid_draw(players);
    for (std::size_t p = 0; p < players; ++p) {
      price_draw[p] = rng.uniform(config.seller_price_range.lo, config.seller_price_range.hi);
      bid_draw[p] = rng.uniform(config.buyer_bid_range.lo, config.buyer_bid_range.hi);
    }

    PeriodRecord period;
    period.players.resize(players);

    std::vector<SellerProfile> raw_sellers;
    std::vector<BuyerProfile> raw_buyers;
    std::vector<std::size_t> seller_player, buyer_player;
    for (std::size_t p = 0; p < players; ++p) {
      auto& pp = period.players[p];
      pp.charge_start = states[p].charge;
      const double requested =
          (!config.load_profile.empty() && t < config.load_profile.size() &&
           p < config.load_profile[t].size())
              ? config.load_profile[t][p]
              : 0.0;
      const double loaded =
          std::clamp(states[p].charge + requested, 0.0, states[p].capacity_max);
      pp.load_delta = loaded - states[p].charge;  // curtailed at the physical limits
      states[p].charge = loaded;

      if (states[p].surplus() > kQuantityTol) {
        pp.role = Role::seller;
        seller_player.push_back(p);
        raw_sellers.push_back({"u" + std::to_string(p + 1), price_draw[p],
                               states[p].surplus(), config.cost_weight});
      } else if (states[p].deficit() > kQuantityTol) {
        pp.role = Role::buyer;
        buyer_player.push_back(p);
        raw_buyers.push_back(
            {"u" + std::to_string(p + 1), bid_draw[p], states[p].deficit()});
      }
    }

    if (!raw_sellers.empty() && !raw_buyers.empty()) {
      period.market_ran = true;
      const MarketInstance market = canonicalize_market(raw_sellers, raw_buyers);
      const DynamicsTrace trace = run_dynamics(market, config.game);
      period.converged = trace.converged;
      const AuctionOutcome out = clear_market(market, trace.last().offers);
      period.price = out.trading_price;

      if (out.trade()) {
        // Merged agents (tied drawn prices) split proportionally to the
        // capacity they brought in.
        std::vector<double> seller_weights(raw_sellers.size()), buyer_weights(raw_buyers.size());
        for (std::size_t i = 0; i < raw_sellers.size(); ++i)
          seller_weights[i] = raw_sellers[i].capacity_bound;
        for (std::size_t k = 0; k < raw_buyers.size(); ++k)
          buyer_weights[k] = raw_buyers[k].demand;
        const std::vector<double> sold = split_allocation(
            market.seller_members, out.sold, seller_weights, raw_sellers.size());
        const std::vector<double> bought = split_allocation(
            market.buyer_members, out.bought, buyer_weights, raw_buyers.size());

        for (std::size_t i = 0; i < seller_player.size(); ++i) {
          const std::size_t p = seller_player[i];
          period.players[p].trade_delta = -sold[i];
          states[p].charge =
              std::clamp(states[p].charge - sold[i], 0.0, states[p].capacity_max);
        }
        for (std::size_t k = 0; k < buyer_player.size(); ++k) {
          const std::size_t p = buyer_player[k];
          period.players[p].trade_delta = bought[k];
          states[p].charge =
              std::clamp(states[p].charge + bought[k], 0.0, states[p].capacity_max);
        }
      }
    }

    for (std::size_t p = 0; p < players; ++p)
      period.players[p].charge_end = states[p].charge;
    result.periods.push_back(std::move(period));
  }

  result.final_states = std::move(states);
  return result;
}

std::vector<BatteryState> generate_fleet(std::size_t n_sellers, std::size_t n_buyers,
                                         const InstanceSpec& spec) {
  spec.validate();
  CounterRng rng(spec.seed, kFleetStream);
  std::vector<BatteryState> fleet;
  fleet.reserve(n_sellers + n_buyers);

  for (std::size_t i = 0; i < n_sellers; ++i) {
    BatteryState b;
    b.reserve = rng.uniform(spec.demand_range.lo, spec.demand_range.hi);
    const double surplus = rng.uniform(spec.surplus_range.lo, spec.surplus_range.hi);
    b.capacity_max = b.reserve + spec.surplus_range.hi;
    b.charge = b.reserve + surplus;
    fleet.push_back(b);
  }
  for (std::size_t k = 0; k < n_buyers; ++k) {
    BatteryState b;
    b.reserve = rng.uniform(spec.demand_range.lo, spec.demand_range.hi);
    const double gap =
        std::min(rng.uniform(spec.demand_range.lo, spec.demand_range.hi), b.reserve);
    b.capacity_max = b.reserve + spec.surplus_range.hi;
    b.charge = b.reserve - gap;
    fleet.push_back(b);
  }
  return fleet;
}

}  // namespace storage_market
