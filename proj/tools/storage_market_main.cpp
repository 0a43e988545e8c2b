// storage-market: clears seeded or file-based storage markets, solves the
// sellers' offer game, and runs the reproduction experiments.

#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "storage_market/game.hpp"
#include "storage_market/greedy.hpp"
#include "storage_market/harness.hpp"
#include "storage_market/io.hpp"
#include "storage_market/log.hpp"
#include "storage_market/market.hpp"

namespace sm = storage_market;

namespace {

sm::Interval parse_range(const std::string& flag, const std::string& text) {
  const auto pos = text.find(':');
  auto bad = [&](const std::string& why) {
    throw sm::InvalidSpecError(flag + ": " + why + " (expected 'lo:hi', got '" + text +
                               "')");
  };
  if (pos == std::string::npos || pos == 0 || pos + 1 == text.size())
    bad("missing ':' separator");
  sm::Interval iv;
  try {
    std::size_t used = 0;
    iv.lo = std::stod(text.substr(0, pos), &used);
    if (used != pos) bad("invalid number");
    const std::string hi = text.substr(pos + 1);
    iv.hi = std::stod(hi, &used);
    if (used != hi.size()) bad("invalid number");
  } catch (const std::logic_error&) {
    bad("invalid number");
  }
  if (iv.lo > iv.hi)
    throw sm::InvalidSpecError("range inversion in " + flag + ": " + text);
  return iv;
}

/// Instance source shared by the market-facing subcommands: an explicit file
/// wins over the seeded generator.
struct InstanceOptions {
  std::string file;
  sm::InstanceSpec spec;
  std::string surplus_range, price_range, bid_range, demand_range;

  void attach(CLI::App* cmd) {
    cmd->add_option("--instance", file, "Market instance file (skips the generator)");
    cmd->add_option("--sellers", spec.n_sellers, "Sellers to generate")
        ->capture_default_str();
    cmd->add_option("--buyers", spec.n_buyers, "Buyers to generate")
        ->capture_default_str();
    cmd->add_option("--seed", spec.seed, "Generator seed")->capture_default_str();
    cmd->add_option("--tau", spec.cost_weight, "Quadratic cost weight")
        ->capture_default_str();
    cmd->add_option("--surplus-range", surplus_range, "Seller capacity range lo:hi");
    cmd->add_option("--price-range", price_range, "Seller reservation price range lo:hi");
    cmd->add_option("--bid-range", bid_range, "Buyer reservation bid range lo:hi");
    cmd->add_option("--demand-range", demand_range, "Buyer demand range lo:hi");
  }

  sm::InstanceSpec finished_spec() const {
    sm::InstanceSpec s = spec;
    if (!surplus_range.empty()) s.surplus_range = parse_range("--surplus-range", surplus_range);
    if (!price_range.empty()) s.seller_price_range = parse_range("--price-range", price_range);
    if (!bid_range.empty()) s.buyer_bid_range = parse_range("--bid-range", bid_range);
    if (!demand_range.empty()) s.demand_range = parse_range("--demand-range", demand_range);
    return s;
  }

  sm::MarketInstance load() const {
    if (!file.empty()) {
      std::ifstream in(file);
      if (!in) throw sm::InvalidSpecError("cannot read instance file '" + file + "'");
      sm::log_info("reading market from " + file);
      return sm::read_instance(in, file);
    }
    const sm::InstanceSpec s = finished_spec();
    sm::log_info("generating market: " + std::to_string(s.n_sellers) + " sellers, " +
                 std::to_string(s.n_buyers) + " buyers, seed " + std::to_string(s.seed));
    return sm::generate_instance(s);
  }
};

struct GameOptions {
  double w = 0.5;
  std::string mode = "seq";
  double epsilon = 1e-4;
  std::size_t max_iter = 500;
  std::size_t grid = 201;
  double nash_tol = 1e-6;

  void attach(CLI::App* cmd, double default_epsilon = 1e-4) {
    epsilon = default_epsilon;
    cmd->add_option("--w", w, "Inertia weight in (0, 1)")->capture_default_str();
    cmd->add_option("--mode", mode, "Update mode")
        ->check(CLI::IsMember({"seq", "par", "sequential", "parallel"}))
        ->capture_default_str();
    cmd->add_option("--epsilon", epsilon, "Convergence threshold (MWh)")
        ->capture_default_str();
    cmd->add_option("--max-iter", max_iter, "Iteration cap")->capture_default_str();
    cmd->add_option("--grid", grid, "Best-response grid points")->capture_default_str();
    cmd->add_option("--nash-tol", nash_tol, "Relative equilibrium tolerance")
        ->capture_default_str();
  }

  sm::GameConfig config(std::size_t n_sellers) const {
    sm::GameConfig cfg;
    cfg.inertia_weight = w;
    cfg.mode = (mode == "par" || mode == "parallel") ? sm::StepMode::parallel
                                                     : sm::StepMode::sequential;
    cfg.convergence_epsilon = epsilon;
    cfg.max_iterations = max_iter;
    cfg.best_response_grid = grid;
    cfg.nash_tolerance = nash_tol;
    cfg.validate(n_sellers);
    return cfg;
  }
};

struct OutputOptions {
  std::string path;
  std::string format;

  void attach(CLI::App* cmd, const char* default_format) {
    format = default_format;
    cmd->add_option("--out", path, "Output file (default stdout)");
    cmd->add_option("--format", format, "Output format")
        ->check(CLI::IsMember({"csv", "text"}))
        ->capture_default_str();
  }

  bool csv() const { return format == "csv"; }
};

void with_output(const std::string& path, const std::function<void(std::ostream&)>& fn) {
  if (path.empty()) {
    fn(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw sm::InvalidSpecError("cannot write output file '" + path + "'");
  fn(out);
  out.flush();
  if (!out) throw sm::InvalidSpecError("failed while writing '" + path + "'");
}

void maybe_write_instance(const std::string& path, const sm::MarketInstance& market) {
  if (path.empty()) return;
  with_output(path, [&](std::ostream& out) { sm::write_instance(market, out); });
}

std::vector<sm::Algorithm> parse_algorithms(const std::string& csv) {
  std::vector<sm::Algorithm> algs;
  std::stringstream ss(csv);
  std::string name;
  while (std::getline(ss, name, ',')) {
    if (name.empty()) continue;
    const auto a = sm::algorithm_from_name(name);
    if (!a) throw sm::InvalidSpecError("unknown algorithm '" + name + "'");
    algs.push_back(*a);
  }
  if (algs.empty()) throw sm::InvalidSpecError("no algorithms selected");
  return algs;
}

std::vector<double> parse_value_list(const std::string& flag, const std::string& csv) {
  std::vector<double> values;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw sm::InvalidSpecError(flag + ": invalid number '" + item + "'");
    }
  }
  if (values.empty()) throw sm::InvalidSpecError(flag + ": empty list");
  return values;
}

// ---------------------------------------------------------------------------
// subcommands

int run_clear(const InstanceOptions& inst, const std::string& offers_file,
              const OutputOptions& output, const std::string& instance_out) {
  const sm::MarketInstance market = inst.load();
  maybe_write_instance(instance_out, market);

  sm::StrategyVector offers;
  if (offers_file.empty()) {
    offers = market.capacity_bounds();
  } else {
    std::ifstream in(offers_file);
    if (!in) throw sm::InvalidSpecError("cannot read strategy file '" + offers_file + "'");
    offers = sm::read_strategy(market, in, offers_file);
  }

  const sm::AuctionOutcome outcome = sm::clear_market(market, offers);
  sm::log_info(outcome.trade()
                   ? "cleared at price " + sm::format_short(*outcome.trading_price)
                   : "no rational trade");
  with_output(output.path, [&](std::ostream& out) {
    output.csv() ? sm::write_outcome_csv(market, outcome, out)
                 : sm::write_outcome_text(market, outcome, out);
  });
  return 0;
}

int run_solve(const InstanceOptions& inst, const GameOptions& game,
              const OutputOptions& output, const std::string& instance_out,
              const std::string& strategy_out, bool auto_weight) {
  const sm::MarketInstance market = inst.load();
  maybe_write_instance(instance_out, market);

  sm::GameConfig cfg = game.config(market.n_sellers());
  if (auto_weight) {
    cfg.inertia_weight = sm::select_weight(market, cfg);
    sm::log_info("selected inertia weight " + sm::format_short(cfg.inertia_weight));
  }

  const sm::DynamicsTrace trace = sm::run_dynamics(market, cfg);
  sm::log_info((trace.converged ? "converged after " : "hit the iteration cap at ") +
               std::to_string(trace.iterations_used) + " iterations");

  with_output(output.path, [&](std::ostream& out) {
    output.csv() ? sm::write_trace_csv(market, trace, out)
                 : sm::write_solve_text(market, trace, cfg, out);
  });
  if (!strategy_out.empty())
    with_output(strategy_out, [&](std::ostream& out) {
      sm::write_strategy(market, trace.last().offers, out);
    });
  return trace.converged ? 0 : 1;
}

int run_compare(const InstanceOptions& inst, const GameOptions& game,
                const OutputOptions& output, const std::string& instance_out) {
  const sm::MarketInstance market = inst.load();
  maybe_write_instance(instance_out, market);

  const sm::GameConfig cfg = game.config(market.n_sellers());
  const sm::DynamicsTrace trace = sm::run_dynamics(market, cfg);
  const sm::GreedyResult greedy = sm::run_greedy(market);

  with_output(output.path, [&](std::ostream& out) {
    output.csv() ? sm::write_compare_csv(market, trace, greedy, out)
                 : sm::write_compare_text(market, trace, greedy, out);
  });
  return trace.converged ? 0 : 1;
}

int run_verify(const InstanceOptions& inst, const std::string& strategy_file,
               std::size_t grid, double nash_tol, const OutputOptions& output,
               const std::string& instance_out) {
  const sm::MarketInstance market = inst.load();
  maybe_write_instance(instance_out, market);

  std::ifstream in(strategy_file);
  if (!in)
    throw sm::InvalidSpecError("cannot read strategy file '" + strategy_file + "'");
  const sm::StrategyVector offers = sm::read_strategy(market, in, strategy_file);

  const sm::NashReport report = sm::verify_nash(market, offers, grid, nash_tol);
  sm::log_info(report.is_nash ? "profile is an equilibrium"
                              : "profile admits a profitable deviation");
  with_output(output.path, [&](std::ostream& out) {
    output.csv() ? sm::write_verify_csv(market, report, out)
                 : sm::write_verify_text(market, report, out);
  });
  return report.is_nash ? 0 : 1;
}

struct SweepOptions {
  std::string vary = "n";
  std::size_t n_fixed = 6, n_min = 4, n_max = 10;
  std::size_t k_fixed = 5, k_min = 4, k_max = 10;
  std::string tau_values = "0.25,0.5,0.75,1";
  double tau_fixed = 0.5;
  std::uint64_t seed = 1;
  std::size_t runs = 1000;
  std::string algorithms = "sequential,parallel,greedy";
  std::string iterations_out, actions_out, raw_out;
};

int run_sweep(const SweepOptions& sw, const GameOptions& game,
              const OutputOptions& output) {
  sm::ExperimentConfig cfg;
  cfg.convergence_epsilon = game.epsilon;
  cfg.max_iterations = game.max_iter;
  cfg.best_response_grid = game.grid;

  std::vector<sm::InstanceSpec> grid;
  auto base_spec = [&](std::size_t n, std::size_t k, double tau) {
    sm::InstanceSpec s;
    s.n_sellers = n;
    s.n_buyers = k;
    s.cost_weight = tau;
    s.seed = sw.seed;
    return s;
  };
  bool with_tau = false;
  if (sw.vary == "n") {
    if (sw.n_min > sw.n_max)
      throw sm::InvalidSpecError("range inversion in --n-min/--n-max");
    for (std::size_t n = sw.n_min; n <= sw.n_max; ++n)
      grid.push_back(base_spec(n, sw.k_fixed, sw.tau_fixed));
  } else if (sw.vary == "k") {
    if (sw.k_min > sw.k_max)
      throw sm::InvalidSpecError("range inversion in --k-min/--k-max");
    for (std::size_t k = sw.k_min; k <= sw.k_max; ++k)
      grid.push_back(base_spec(sw.n_fixed, k, sw.tau_fixed));
  } else {  // tau
    with_tau = true;
    for (double tau : parse_value_list("--tau-values", sw.tau_values))
      grid.push_back(base_spec(sw.n_fixed, sw.k_fixed, tau));
  }

  sm::log_info("sweep over " + std::to_string(grid.size()) + " cells, " +
               std::to_string(sw.runs) + " runs each");
  const sm::ExperimentReport report =
      sm::run_experiment(grid, parse_algorithms(sw.algorithms), sw.runs, cfg);

  with_output(output.path, [&](std::ostream& out) {
    output.csv() ? sm::write_aggregate_csv(report, out, with_tau)
                 : sm::write_report_text(report, out);
  });
  if (!sw.iterations_out.empty())
    with_output(sw.iterations_out,
                [&](std::ostream& out) { sm::write_iterations_csv(report, out); });
  if (!sw.actions_out.empty())
    with_output(sw.actions_out,
                [&](std::ostream& out) { sm::write_actions_csv(report, out); });
  if (!sw.raw_out.empty())
    with_output(sw.raw_out, [&](std::ostream& out) { sm::write_raw_csv(report, out); });
  return 0;
}

struct TimesimOptions {
  std::size_t sellers = 4, buyers = 3, periods = 6;
  std::uint64_t seed = 1;
  double tau = 0.5;
  std::string price_range, bid_range;
  std::string load_file;
  bool fixed_prices = false;
};

int run_timesim(const TimesimOptions& ts, const GameOptions& game,
                const OutputOptions& output) {
  sm::TimeSimConfig cfg;
  cfg.periods = ts.periods;
  cfg.seed = ts.seed;
  cfg.cost_weight = ts.tau;
  cfg.redraw_prices = !ts.fixed_prices;
  cfg.game = game.config(1);  // weight and epsilon checks; sizes vary per period
  if (!ts.price_range.empty())
    cfg.seller_price_range = parse_range("--price-range", ts.price_range);
  if (!ts.bid_range.empty()) cfg.buyer_bid_range = parse_range("--bid-range", ts.bid_range);
  if (!ts.load_file.empty()) {
    std::ifstream in(ts.load_file);
    if (!in) throw sm::InvalidSpecError("cannot read load file '" + ts.load_file + "'");
    cfg.load_profile = sm::read_load_profile(in, ts.load_file);
  }

  sm::InstanceSpec fleet_spec;
  fleet_spec.cost_weight = ts.tau;
  fleet_spec.seed = ts.seed;
  const auto fleet = sm::generate_fleet(ts.sellers, ts.buyers, fleet_spec);
  const sm::TimeSimResult result = sm::run_time_dependent(fleet, cfg);

  with_output(output.path, [&](std::ostream& out) {
    output.csv() ? sm::write_timesim_csv(result, out)
                 : sm::write_timesim_text(result, out);
  });
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Double-auction energy trading market simulator"};
  app.set_config("--config", "", "Read options from an INI file");
  app.require_subcommand(1);
  int rc = 0;

  // clear
  auto* clear_cmd = app.add_subcommand("clear", "Clear one market at fixed offers");
  auto clear_inst = std::make_shared<InstanceOptions>();
  auto clear_out = std::make_shared<OutputOptions>();
  auto clear_offers = std::make_shared<std::string>();
  auto clear_inst_out = std::make_shared<std::string>();
  clear_inst->attach(clear_cmd);
  clear_out->attach(clear_cmd, "text");
  clear_cmd->add_option("--offers", *clear_offers,
                        "Strategy file (default: capacity bounds)");
  clear_cmd->add_option("--instance-out", *clear_inst_out,
                        "Also write the canonical instance here");
  clear_cmd->callback(
      [=, &rc] { rc = run_clear(*clear_inst, *clear_offers, *clear_out, *clear_inst_out); });

  // solve
  auto* solve_cmd = app.add_subcommand("solve", "Run the offer game to equilibrium");
  auto solve_inst = std::make_shared<InstanceOptions>();
  auto solve_game = std::make_shared<GameOptions>();
  auto solve_out = std::make_shared<OutputOptions>();
  auto solve_inst_out = std::make_shared<std::string>();
  auto solve_strat_out = std::make_shared<std::string>();
  auto solve_auto_w = std::make_shared<bool>(false);
  solve_inst->attach(solve_cmd);
  solve_game->attach(solve_cmd);
  solve_out->attach(solve_cmd, "text");
  solve_cmd->add_option("--instance-out", *solve_inst_out,
                        "Also write the canonical instance here");
  solve_cmd->add_option("--strategy-out", *solve_strat_out,
                        "Write the final offers as a strategy file");
  solve_cmd->add_flag("--auto-weight", *solve_auto_w,
                      "Bisect for the smallest converging inertia weight");
  solve_cmd->callback([=, &rc] {
    rc = run_solve(*solve_inst, *solve_game, *solve_out, *solve_inst_out,
                   *solve_strat_out, *solve_auto_w);
  });

  // compare
  auto* compare_cmd =
      app.add_subcommand("compare", "Equilibrium vs greedy baseline on one market");
  auto compare_inst = std::make_shared<InstanceOptions>();
  auto compare_game = std::make_shared<GameOptions>();
  auto compare_out = std::make_shared<OutputOptions>();
  auto compare_inst_out = std::make_shared<std::string>();
  compare_inst->attach(compare_cmd);
  compare_game->attach(compare_cmd);
  compare_out->attach(compare_cmd, "text");
  compare_cmd->add_option("--instance-out", *compare_inst_out,
                          "Also write the canonical instance here");
  compare_cmd->callback([=, &rc] {
    rc = run_compare(*compare_inst, *compare_game, *compare_out, *compare_inst_out);
  });

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Monte Carlo sweeps over market shapes");
  auto sweep_opts = std::make_shared<SweepOptions>();
  auto sweep_game = std::make_shared<GameOptions>();
  auto sweep_out = std::make_shared<OutputOptions>();
  sweep_game->attach(sweep_cmd, sm::kSweepEpsilon);
  sweep_out->attach(sweep_cmd, "csv");
  sweep_cmd->add_option("--vary", sweep_opts->vary, "Swept dimension")
      ->check(CLI::IsMember({"n", "k", "tau"}))
      ->capture_default_str();
  sweep_cmd->add_option("--n", sweep_opts->n_fixed, "Sellers when not varying n")
      ->capture_default_str();
  sweep_cmd->add_option("--n-min", sweep_opts->n_min, "")->capture_default_str();
  sweep_cmd->add_option("--n-max", sweep_opts->n_max, "")->capture_default_str();
  sweep_cmd->add_option("--k", sweep_opts->k_fixed, "Buyers when not varying k")
      ->capture_default_str();
  sweep_cmd->add_option("--k-min", sweep_opts->k_min, "")->capture_default_str();
  sweep_cmd->add_option("--k-max", sweep_opts->k_max, "")->capture_default_str();
  sweep_cmd->add_option("--tau", sweep_opts->tau_fixed, "Cost weight when not varying tau")
      ->capture_default_str();
  sweep_cmd->add_option("--tau-values", sweep_opts->tau_values, "Swept cost weights")
      ->capture_default_str();
  sweep_cmd->add_option("--seed", sweep_opts->seed, "Base seed")->capture_default_str();
  sweep_cmd->add_option("--runs", sweep_opts->runs, "Runs per cell")
      ->capture_default_str();
  sweep_cmd->add_option("--algorithms", sweep_opts->algorithms, "Comma-separated list")
      ->capture_default_str();
  sweep_cmd->add_option("--iterations-out", sweep_opts->iterations_out,
                        "Iteration statistics CSV");
  sweep_cmd->add_option("--actions-out", sweep_opts->actions_out, "Action statistics CSV");
  sweep_cmd->add_option("--raw-out", sweep_opts->raw_out, "Per-run rows CSV");
  sweep_cmd->callback([=, &rc] { rc = run_sweep(*sweep_opts, *sweep_game, *sweep_out); });

  // timesim
  auto* timesim_cmd =
      app.add_subcommand("timesim", "Multi-period trading over a battery fleet");
  auto ts_opts = std::make_shared<TimesimOptions>();
  auto ts_game = std::make_shared<GameOptions>();
  auto ts_out = std::make_shared<OutputOptions>();
  ts_game->attach(timesim_cmd);
  ts_out->attach(timesim_cmd, "csv");
  timesim_cmd->add_option("--sellers", ts_opts->sellers, "Units starting above reserve")
      ->capture_default_str();
  timesim_cmd->add_option("--buyers", ts_opts->buyers, "Units starting below reserve")
      ->capture_default_str();
  timesim_cmd->add_option("--periods", ts_opts->periods, "Trading periods")
      ->capture_default_str();
  timesim_cmd->add_option("--seed", ts_opts->seed, "Simulation seed")
      ->capture_default_str();
  timesim_cmd->add_option("--tau", ts_opts->tau, "Quadratic cost weight")
      ->capture_default_str();
  timesim_cmd->add_option("--price-range", ts_opts->price_range,
                          "Seller reservation price range lo:hi");
  timesim_cmd->add_option("--bid-range", ts_opts->bid_range,
                          "Buyer reservation bid range lo:hi");
  timesim_cmd->add_option("--load", ts_opts->load_file, "Exogenous load profile file");
  timesim_cmd->add_flag("--fixed-prices", ts_opts->fixed_prices,
                        "Reuse the first period's price draws");
  timesim_cmd->callback([=, &rc] { rc = run_timesim(*ts_opts, *ts_game, *ts_out); });

  // verify
  auto* verify_cmd = app.add_subcommand("verify", "Certify a strategy file as a Nash point");
  auto verify_inst = std::make_shared<InstanceOptions>();
  auto verify_out = std::make_shared<OutputOptions>();
  auto verify_strategy = std::make_shared<std::string>();
  auto verify_inst_out = std::make_shared<std::string>();
  auto verify_grid = std::make_shared<std::size_t>(201);
  auto verify_tol = std::make_shared<double>(1e-6);
  verify_inst->attach(verify_cmd);
  verify_out->attach(verify_cmd, "text");
  verify_cmd->add_option("--strategy", *verify_strategy, "Strategy file to check")
      ->required();
  verify_cmd->add_option("--grid", *verify_grid, "Deviation grid points")
      ->capture_default_str();
  verify_cmd->add_option("--nash-tol", *verify_tol, "Relative gain tolerance")
      ->capture_default_str();
  verify_cmd->add_option("--instance-out", *verify_inst_out,
                         "Also write the canonical instance here");
  verify_cmd->callback([=, &rc] {
    rc = run_verify(*verify_inst, *verify_strategy, *verify_grid, *verify_tol,
                    *verify_out, *verify_inst_out);
  });

  if (argc <= 1) {
    std::cout << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "[storage-market] error: " << e.what() << '\n';
    return 2;
  } catch (const sm::NoConvergentWeightError& e) {
    sm::log_error(e.what());
    return 1;
  } catch (const sm::ParseError& e) {
    sm::log_error(e.what());
    return 2;
  } catch (const sm::MarketError& e) {
    sm::log_error(e.what());
    return 2;
  } catch (const std::exception& e) {
    sm::log_error(e.what());
    return 1;
  }
  return rc;
}
