#include <doctest.h>

#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

#include <storage_market/harness.hpp>
#include <storage_market/io.hpp>

using namespace storage_market;

namespace {

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += (c == '\n');
  return n;
}

}  // namespace

TEST_CASE("exact formatting round-trips doubles bit for bit") {
  for (double v : {0.1, 1.0 / 3.0, -2.7182818284590452, 1e-9, 12345678.9012345,
                   27.479229618580504, 0.0}) {
    const std::string s = format_exact(v);
    CHECK(std::strtod(s.c_str(), nullptr) == v);
  }
  CHECK(format_short(1.0 / 3.0) == "0.333333");
  CHECK(format_short(20.0) == "20");
}

TEST_CASE("instances round-trip through the structured-text format") {
  InstanceSpec spec;
  spec.seed = 321;
  const MarketInstance market = generate_instance(spec);

  std::ostringstream out;
  write_instance(market, out);

  std::istringstream in(out.str());
  const MarketInstance back = read_instance(in, "mem");
  REQUIRE(back.n_sellers() == market.n_sellers());
  REQUIRE(back.n_buyers() == market.n_buyers());
  for (std::size_t i = 0; i < market.n_sellers(); ++i) {
    CHECK(back.sellers[i].id == market.sellers[i].id);
    CHECK(back.sellers[i].reservation_price == market.sellers[i].reservation_price);
    CHECK(back.sellers[i].capacity_bound == market.sellers[i].capacity_bound);
    CHECK(back.sellers[i].cost_weight == market.sellers[i].cost_weight);
  }
  for (std::size_t k = 0; k < market.n_buyers(); ++k) {
    CHECK(back.buyers[k].reservation_bid == market.buyers[k].reservation_bid);
    CHECK(back.buyers[k].demand == market.buyers[k].demand);
  }

  // The re-read instance clears to a bit-identical outcome.
  StrategyVector offers;
  for (const auto& s : market.sellers) offers.push_back(0.6 * s.capacity_bound);
  const AuctionOutcome a = clear_market(market, offers);
  const AuctionOutcome b = clear_market(back, offers);
  CHECK(a.trading_price == b.trading_price);
  CHECK(a.marginal_seller == b.marginal_seller);
  CHECK(a.marginal_buyer == b.marginal_buyer);
  CHECK(a.volume == b.volume);
  for (std::size_t i = 0; i < a.sold.size(); ++i) CHECK(a.sold[i] == b.sold[i]);
  for (std::size_t k = 0; k < a.bought.size(); ++k) CHECK(a.bought[k] == b.bought[k]);
}

TEST_CASE("instance parsing rejects malformed files with source positions") {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return read_instance(in, "bad.txt");
  };

  CHECK_THROWS_AS(parse(""), ParseError);
  CHECK_THROWS_AS(parse("schema: storage-market/strategy v1\n"), ParseError);
  CHECK_THROWS_AS(parse("schema: storage-market/instance v1\n"
                        "widget s1 price 10 bound 5 tau 0.5\n"),
                  ParseError);
  CHECK_THROWS_AS(parse("schema: storage-market/instance v1\n"
                        "seller s1 price ten bound 5 tau 0.5\n"),
                  ParseError);
  CHECK_THROWS_AS(parse("schema: storage-market/instance v1\n"
                        "seller s1 price 10 bound 5\n"),
                  ParseError);
  // Domain validation runs after parsing: a negative bound is a ParseError too.
  CHECK_THROWS_AS(parse("schema: storage-market/instance v1\n"
                        "seller s1 price 10 bound -5 tau 0.5\n"
                        "buyer b1 bid 30 demand 10\n"),
                  ParseError);

  try {
    parse("schema: storage-market/instance v1\n"
          "seller s1 price 10 bound 5 tau 0.5\n"
          "oops\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("bad.txt:3") != std::string::npos);
  }

  // Comments and blank lines are fine.
  std::istringstream ok(
      "schema: storage-market/instance v1\n"
      "# a comment\n"
      "\n"
      "seller s1 price 10 bound 5 tau 0.5   # trailing note\n"
      "buyer b1 bid 30 demand 10\n");
  const MarketInstance m = read_instance(ok, "ok.txt");
  CHECK(m.n_sellers() == 1);
  CHECK(m.n_buyers() == 1);
}

TEST_CASE("strategies round-trip and demand full coverage") {
  InstanceSpec spec;
  spec.seed = 77;
  spec.n_sellers = 3;
  spec.n_buyers = 2;
  const MarketInstance market = generate_instance(spec);
  const StrategyVector offers{12.5, 0.0, 31.25};

  std::ostringstream out;
  write_strategy(market, offers, out);
  std::istringstream in(out.str());
  const StrategyVector back = read_strategy(market, in, "mem");
  REQUIRE(back.size() == offers.size());
  for (std::size_t i = 0; i < offers.size(); ++i) CHECK(back[i] == offers[i]);

  auto parse = [&](const std::string& text) {
    std::istringstream s(text);
    return read_strategy(market, s, "strat.txt");
  };
  const std::string header = "schema: storage-market/strategy v1\n";
  CHECK_THROWS_AS(parse(header + "offer s1 1\noffer s2 2\n"), ParseError);  // s3 missing
  CHECK_THROWS_AS(parse(header + "offer s1 1\noffer s1 2\noffer s2 0\noffer s3 0\n"),
                  ParseError);
  CHECK_THROWS_AS(parse(header + "offer nobody 1\n"), ParseError);
  CHECK_THROWS_AS(parse(header + "offer s1\n"), ParseError);
}

TEST_CASE("load profiles fill the gaps between sparse entries with zeros") {
  std::istringstream in(
      "schema: storage-market/load v1\n"
      "load 3 0 -150\n"
      "load 3 4 80\n"
      "load 1 2 -7.5\n");
  const auto profile = read_load_profile(in, "load.txt");
  REQUIRE(profile.size() == 4);
  CHECK(profile[0].empty());
  REQUIRE(profile[1].size() == 3);
  CHECK(profile[1][2] == -7.5);
  REQUIRE(profile[3].size() == 5);
  CHECK(profile[3][0] == -150.0);
  CHECK(profile[3][1] == 0.0);
  CHECK(profile[3][4] == 80.0);

  std::istringstream bad("schema: storage-market/load v1\nload -1 0 5\n");
  CHECK_THROWS_AS(read_load_profile(bad, "load.txt"), ParseError);
}

TEST_CASE("the aggregate table keeps its documented column order") {
  InstanceSpec cell;
  cell.n_sellers = 4;
  cell.n_buyers = 3;
  cell.seed = 11;
  ExperimentConfig cfg;
  const ExperimentReport report =
      run_experiment({cell}, {Algorithm::sequential, Algorithm::greedy}, 2, cfg);

  std::ostringstream out;
  write_aggregate_csv(report, out, false);
  const std::string text = out.str();
  CHECK(text.rfind("k,n,algorithm,mean_utility,std_utility,runs\n", 0) == 0);
  CHECK(count_lines(text) == 1 + report.aggregates.size());
  CHECK(text.find("sequential") != std::string::npos);
  CHECK(text.find("greedy") != std::string::npos);

  std::ostringstream tau_out;
  write_aggregate_csv(report, tau_out, true);
  CHECK(tau_out.str().rfind("k,n,tau,algorithm,mean_utility,std_utility,runs\n", 0) == 0);

  // An empty report still announces its schema.
  std::ostringstream empty;
  write_aggregate_csv(ExperimentReport{}, empty, false);
  CHECK(empty.str() == "k,n,algorithm,mean_utility,std_utility,runs\n");

  std::ostringstream raw;
  write_raw_csv(report, raw);
  CHECK(raw.str().rfind("k,n,tau,algorithm,seed,run,utility,action,iterations,converged\n",
                        0) == 0);
  CHECK(count_lines(raw.str()) == 1 + report.raw.size());
}

TEST_CASE("trace emission writes one row per iteration") {
  InstanceSpec spec;
  spec.seed = 5;
  const MarketInstance market = generate_instance(spec);
  GameConfig cfg;
  cfg.inertia_weight = 0.3;
  const DynamicsTrace trace = run_dynamics(market, cfg);
  REQUIRE(trace.converged);

  std::ostringstream out;
  write_trace_csv(market, trace, out);
  CHECK(count_lines(out.str()) == 1 + trace.iterations_used);
  CHECK(out.str().rfind("iteration,price", 0) == 0);
}

TEST_CASE("time simulation tables carry one row per player and period") {
  const std::vector<BatteryState> fleet{
      {80.0, 100.0, 20.0}, {60.0, 100.0, 10.0}, {5.0, 80.0, 40.0}, {10.0, 90.0, 55.0}};
  TimeSimConfig cfg;
  cfg.periods = 3;
  cfg.seed = 4;
  const TimeSimResult res = run_time_dependent(fleet, cfg);

  std::ostringstream csv;
  write_timesim_csv(res, csv);
  CHECK(count_lines(csv.str()) == 1 + cfg.periods * fleet.size());
  CHECK(csv.str().rfind("period,player,role,charge_start,load_delta,trade_delta,"
                        "charge_end,price,converged\n",
                        0) == 0);

  std::ostringstream text;
  write_timesim_text(res, text);
  CHECK(text.str().rfind("schema: storage-market/timesim v1\n", 0) == 0);
  CHECK(count_lines(text.str()) == 1 + cfg.periods * (1 + fleet.size()));
}
