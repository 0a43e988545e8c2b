#include "storage_market/io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace storage_market {

namespace {

std::string printf_double(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

/// Quotes a CSV cell only when it needs it.
std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  q += '"';
  return q;
}

const char* role_name(Role r) {
  switch (r) {
    case Role::seller: return "seller";
    case Role::buyer: return "buyer";
    case Role::idle: return "idle";
  }
  return "idle";
}

/// Whitespace-token line scanner that skips blanks and '#' comments and
/// tracks positions for error messages.
class LineReader {
 public:
  LineReader(std::istream& in, std::string source)
      : in_(in), source_(std::move(source)) {}

  bool next(std::vector<std::string>& tokens) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      tokens.clear();
      std::istringstream ss(line);
      std::string tok;
      while (ss >> tok) {
        if (tok.front() == '#') break;
        tokens.push_back(tok);
      }
      if (!tokens.empty()) return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(source_ + ":" + std::to_string(line_no_) + ": " + what);
  }

  void expect_schema(const std::string& kind, std::vector<std::string>& tokens) {
    if (!next(tokens))
      throw ParseError(source_ + ": empty file, expected 'schema: storage-market/" +
                       kind + " v1'");
    if (tokens.size() != 3 || tokens[0] != "schema:" ||
        tokens[1] != "storage-market/" + kind || tokens[2] != "v1")
      fail("expected 'schema: storage-market/" + kind + " v1'");
  }

  double parse_double(const std::string& tok, const char* what) const {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size() || errno == ERANGE)
      fail(std::string("invalid ") + what + " '" + tok + "'");
    return v;
  }

  std::size_t parse_index(const std::string& tok, const char* what) const {
    errno = 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(tok.c_str(), &end, 10);
    if (end != tok.c_str() + tok.size() || errno == ERANGE || tok.front() == '-')
      fail(std::string("invalid ") + what + " '" + tok + "'");
    return static_cast<std::size_t>(v);
  }

 private:
  std::istream& in_;
  std::string source_;
  std::size_t line_no_ = 0;
};

void write_schema(std::ostream& out, const char* kind) {
  out << "schema: storage-market/" << kind << " v1\n";
}

std::string yes_no(bool b) { return b ? "yes" : "no"; }

double vec_mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

std::string format_short(double v) { return printf_double("%.6g", v); }
std::string format_exact(double v) { return printf_double("%.17g", v); }

void write_instance(const MarketInstance& market, std::ostream& out) {
  write_schema(out, "instance");
  for (const auto& s : market.sellers)
    out << "seller " << s.id << " price " << format_exact(s.reservation_price)
        << " bound " << format_exact(s.capacity_bound) << " tau "
        << format_exact(s.cost_weight) << '\n';
  for (const auto& b : market.buyers)
    out << "buyer " << b.id << " bid " << format_exact(b.reservation_bid) << " demand "
        << format_exact(b.demand) << '\n';
}

std::pair<std::vector<SellerProfile>, std::vector<BuyerProfile>> read_profiles(
    std::istream& in, const std::string& source) {
  LineReader reader(in, source);
  std::vector<std::string> t;
  reader.expect_schema("instance", t);

  std::vector<SellerProfile> sellers;
  std::vector<BuyerProfile> buyers;
  while (reader.next(t)) {
    if (t[0] == "seller") {
      if (t.size() != 8 || t[2] != "price" || t[4] != "bound" || t[6] != "tau")
        reader.fail("expected 'seller <id> price <v> bound <v> tau <v>'");
      sellers.push_back({t[1], reader.parse_double(t[3], "price"),
                         reader.parse_double(t[5], "bound"),
                         reader.parse_double(t[7], "tau")});
    } else if (t[0] == "buyer") {
      if (t.size() != 6 || t[2] != "bid" || t[4] != "demand")
        reader.fail("expected 'buyer <id> bid <v> demand <v>'");
      buyers.push_back(
          {t[1], reader.parse_double(t[3], "bid"), reader.parse_double(t[5], "demand")});
    } else {
      reader.fail("unknown record '" + t[0] + "'");
    }
  }
  return {std::move(sellers), std::move(buyers)};
}

MarketInstance read_instance(std::istream& in, const std::string& source) {
  const auto [sellers, buyers] = read_profiles(in, source);
  try {
    return canonicalize_market(sellers, buyers);
  } catch (const MarketError& e) {
    throw ParseError(source + ": " + e.what());
  }
}

void write_strategy(const MarketInstance& market, std::span<const double> offers,
                    std::ostream& out) {
  write_schema(out, "strategy");
  for (std::size_t i = 0; i < market.n_sellers(); ++i)
    out << "offer " << market.sellers[i].id << ' ' << format_exact(offers[i]) << '\n';
}

StrategyVector read_strategy(const MarketInstance& market, std::istream& in,
                             const std::string& source) {
  LineReader reader(in, source);
  std::vector<std::string> t;
  reader.expect_schema("strategy", t);

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < market.n_sellers(); ++i) index[market.sellers[i].id] = i;

  StrategyVector offers(market.n_sellers(), 0.0);
  std::vector<bool> seen(market.n_sellers(), false);
  while (reader.next(t)) {
    if (t.size() != 3 || t[0] != "offer") reader.fail("expected 'offer <id> <value>'");
    const auto it = index.find(t[1]);
    if (it == index.end()) reader.fail("unknown seller id '" + t[1] + "'");
    if (seen[it->second]) reader.fail("duplicate offer for seller '" + t[1] + "'");
    seen[it->second] = true;
    offers[it->second] = reader.parse_double(t[2], "offer");
  }
  for (std::size_t i = 0; i < seen.size(); ++i)
    if (!seen[i])
      throw ParseError(source + ": missing offer for seller '" + market.sellers[i].id +
                       "'");
  return offers;
}

std::vector<std::vector<double>> read_load_profile(std::istream& in,
                                                   const std::string& source) {
  LineReader reader(in, source);
  std::vector<std::string> t;
  reader.expect_schema("load", t);

  std::vector<std::vector<double>> profile;
  while (reader.next(t)) {
    if (t.size() != 4 || t[0] != "load")
      reader.fail("expected 'load <period> <player> <delta>'");
    const std::size_t period = reader.parse_index(t[1], "period");
    const std::size_t player = reader.parse_index(t[2], "player");
    const double delta = reader.parse_double(t[3], "delta");
    if (period >= profile.size()) profile.resize(period + 1);
    if (player >= profile[period].size()) profile[period].resize(player + 1, 0.0);
    profile[period][player] = delta;
  }
  return profile;
}

void write_outcome_text(const MarketInstance& market, const AuctionOutcome& outcome,
                        std::ostream& out) {
  write_schema(out, "outcome");
  out << "trade " << yes_no(outcome.trade()) << '\n';
  out << "price " << (outcome.trading_price ? format_exact(*outcome.trading_price) : "none")
      << '\n';
  out << "marginal_seller "
      << (outcome.marginal_seller ? market.sellers[*outcome.marginal_seller].id : "none")
      << '\n';
  out << "marginal_buyer "
      << (outcome.marginal_buyer ? market.buyers[*outcome.marginal_buyer].id : "none")
      << '\n';
  out << "volume " << format_exact(outcome.volume) << '\n';
  for (std::size_t i = 0; i < market.n_sellers(); ++i)
    out << "sold " << market.sellers[i].id << ' ' << format_exact(outcome.sold[i]) << '\n';
  for (std::size_t k = 0; k < market.n_buyers(); ++k)
    out << "bought " << market.buyers[k].id << ' ' << format_exact(outcome.bought[k])
        << '\n';
}

void write_outcome_csv(const MarketInstance& market, const AuctionOutcome& outcome,
                       std::ostream& out) {
  out << "side,id,reservation,quantity,marginal,price\n";
  const std::string price =
      outcome.trading_price ? format_short(*outcome.trading_price) : "";
  for (std::size_t i = 0; i < market.n_sellers(); ++i)
    out << "seller," << csv_cell(market.sellers[i].id) << ','
        << format_short(market.sellers[i].reservation_price) << ','
        << format_short(outcome.sold[i]) << ','
        << (outcome.marginal_seller && *outcome.marginal_seller == i ? "true" : "false")
        << ',' << price << '\n';
  for (std::size_t k = 0; k < market.n_buyers(); ++k)
    out << "buyer," << csv_cell(market.buyers[k].id) << ','
        << format_short(market.buyers[k].reservation_bid) << ','
        << format_short(outcome.bought[k]) << ','
        << (outcome.marginal_buyer && *outcome.marginal_buyer == k ? "true" : "false")
        << ',' << price << '\n';
}

void write_solve_text(const MarketInstance& market, const DynamicsTrace& trace,
                      const GameConfig& config, std::ostream& out) {
  write_schema(out, "solve");
  out << "mode " << (config.mode == StepMode::sequential ? "sequential" : "parallel")
      << '\n';
  out << "w " << format_exact(config.inertia_weight) << '\n';
  out << "epsilon " << format_exact(config.convergence_epsilon) << '\n';
  out << "max_iterations " << config.max_iterations << '\n';
  out << "converged " << yes_no(trace.converged) << '\n';
  out << "iterations " << trace.iterations_used << '\n';
  const auto& fin = trace.last();
  out << "price " << (fin.price ? format_exact(*fin.price) : "none") << '\n';
  for (std::size_t i = 0; i < market.n_sellers(); ++i)
    out << "offer " << market.sellers[i].id << ' ' << format_exact(fin.offers[i]) << '\n';
  for (std::size_t i = 0; i < market.n_sellers(); ++i)
    out << "utility " << market.sellers[i].id << ' ' << format_exact(fin.utilities[i])
        << '\n';
  out << "nonparticipants";
  if (trace.nonparticipants.empty()) {
    out << " none";
  } else {
    for (std::size_t i : trace.nonparticipants) out << ' ' << market.sellers[i].id;
  }
  out << '\n';
}

void write_trace_csv(const MarketInstance& market, const DynamicsTrace& trace,
                     std::ostream& out) {
  out << "iteration,price";
  for (const auto& s : market.sellers) out << ',' << csv_cell("offer_" + s.id);
  for (const auto& s : market.sellers) out << ',' << csv_cell("utility_" + s.id);
  out << '\n';
  for (std::size_t t = 0; t < trace.iterations.size(); ++t) {
    const auto& rec = trace.iterations[t];
    out << (t + 1) << ',' << (rec.price ? format_short(*rec.price) : "");
    for (double a : rec.offers) out << ',' << format_short(a);
    for (double u : rec.utilities) out << ',' << format_short(u);
    out << '\n';
  }
}

void write_greedy_text(const MarketInstance& market, const GreedyResult& result,
                       std::ostream& out) {
  write_schema(out, "greedy");
  out << "matches " << result.matches.size() << '\n';
  for (const auto& m : result.matches)
    out << "match " << market.sellers[m.seller].id << ' ' << market.buyers[m.buyer].id
        << " price " << format_exact(m.price) << " quantity " << format_exact(m.quantity)
        << '\n';
  for (std::size_t i = 0; i < market.n_sellers(); ++i)
    out << "sold " << market.sellers[i].id << ' ' << format_exact(result.sold[i]) << '\n';
  for (std::size_t i = 0; i < market.n_sellers(); ++i)
    out << "utility " << market.sellers[i].id << ' ' << format_exact(result.utilities[i])
        << '\n';
}

void write_greedy_csv(const MarketInstance& market, const GreedyResult& result,
                      std::ostream& out) {
  out << "seller,buyer,price,quantity\n";
  for (const auto& m : result.matches)
    out << csv_cell(market.sellers[m.seller].id) << ','
        << csv_cell(market.buyers[m.buyer].id) << ',' << format_short(m.price) << ','
        << format_short(m.quantity) << '\n';
}

void write_compare_text(const MarketInstance& market, const DynamicsTrace& trace,
                        const GreedyResult& greedy, std::ostream& out) {
  write_schema(out, "compare");
  const double game_mean = vec_mean(trace.last().utilities);
  const double greedy_mean = vec_mean(greedy.utilities);
  out << "converged " << yes_no(trace.converged) << '\n';
  out << "iterations " << trace.iterations_used << '\n';
  out << "game_mean_utility " << format_exact(game_mean) << '\n';
  out << "greedy_mean_utility " << format_exact(greedy_mean) << '\n';
  out << "improvement_pct ";
  if (greedy_mean > 0.0)
    out << format_short(100.0 * (game_mean - greedy_mean) / greedy_mean);
  else
    out << "none";
  out << '\n';
  for (std::size_t i = 0; i < market.n_sellers(); ++i)
    out << "seller " << market.sellers[i].id << " game "
        << format_exact(trace.last().utilities[i]) << " greedy "
        << format_exact(greedy.utilities[i]) << '\n';
}

void write_compare_csv(const MarketInstance& market, const DynamicsTrace& trace,
                       const GreedyResult& greedy, std::ostream& out) {
  const AuctionOutcome outcome = clear_market(market, trace.last().offers);
  out << "id,game_quantity,game_utility,greedy_quantity,greedy_utility\n";
  for (std::size_t i = 0; i < market.n_sellers(); ++i)
    out << csv_cell(market.sellers[i].id) << ',' << format_short(outcome.sold[i]) << ','
        << format_short(trace.last().utilities[i]) << ',' << format_short(greedy.sold[i])
        << ',' << format_short(greedy.utilities[i]) << '\n';
}

void write_verify_text(const MarketInstance& market, const NashReport& report,
                       std::ostream& out) {
  write_schema(out, "verify");
  out << "nash " << yes_no(report.is_nash) << '\n';
  out << "worst_gain " << format_exact(report.worst_gain) << '\n';
  out << "worst_seller " << market.sellers[report.worst_seller].id << '\n';
  out << "tolerance " << format_exact(report.worst_tolerance) << '\n';
}

void write_verify_csv(const MarketInstance& market, const NashReport& report,
                      std::ostream& out) {
  out << "nash,worst_gain,worst_seller,tolerance\n";
  out << (report.is_nash ? "true" : "false") << ',' << format_short(report.worst_gain)
      << ',' << csv_cell(market.sellers[report.worst_seller].id) << ','
      << format_short(report.worst_tolerance) << '\n';
}

void write_aggregate_csv(const ExperimentReport& report, std::ostream& out,
                         bool with_tau) {
  out << (with_tau ? "k,n,tau,algorithm,mean_utility,std_utility,runs"
                   : "k,n,algorithm,mean_utility,std_utility,runs")
      << '\n';
  for (const auto& row : report.aggregates) {
    out << row.k << ',' << row.n << ',';
    if (with_tau) out << format_short(row.tau) << ',';
    out << algorithm_name(row.algorithm) << ',' << format_short(row.mean_utility) << ','
        << format_short(row.std_utility) << ',' << row.runs << '\n';
  }
}

void write_iterations_csv(const ExperimentReport& report, std::ostream& out) {
  out << "k,n,algorithm,mean_iterations,std_iterations,converged_runs,runs\n";
  for (const auto& row : report.aggregates)
    out << row.k << ',' << row.n << ',' << algorithm_name(row.algorithm) << ','
        << format_short(row.mean_iterations) << ',' << format_short(row.std_iterations)
        << ',' << row.converged_runs << ',' << row.runs << '\n';
}

void write_actions_csv(const ExperimentReport& report, std::ostream& out) {
  out << "k,n,algorithm,mean_action,std_action,runs\n";
  for (const auto& row : report.aggregates)
    out << row.k << ',' << row.n << ',' << algorithm_name(row.algorithm) << ','
        << format_short(row.mean_action) << ',' << format_short(row.std_action) << ','
        << row.runs << '\n';
}

void write_raw_csv(const ExperimentReport& report, std::ostream& out) {
  out << "k,n,tau,algorithm,seed,run,utility,action,iterations,converged\n";
  for (const auto& row : report.raw)
    out << row.k << ',' << row.n << ',' << format_short(row.tau) << ','
        << algorithm_name(row.algorithm) << ',' << row.seed << ',' << row.run << ','
        << format_short(row.mean_utility) << ',' << format_short(row.mean_action) << ','
        << row.iterations << ',' << (row.converged ? "true" : "false") << '\n';
}

void write_report_text(const ExperimentReport& report, std::ostream& out) {
  write_schema(out, "sweep");
  for (const auto& row : report.aggregates)
    out << "cell k " << row.k << " n " << row.n << " tau " << format_short(row.tau)
        << " algorithm " << algorithm_name(row.algorithm) << " mean_utility "
        << format_exact(row.mean_utility) << " std_utility "
        << format_exact(row.std_utility) << " mean_iterations "
        << format_exact(row.mean_iterations) << " converged " << row.converged_runs
        << " runs " << row.runs << '\n';
}

void write_timesim_csv(const TimeSimResult& result, std::ostream& out) {
  out << "period,player,role,charge_start,load_delta,trade_delta,charge_end,price,"
         "converged\n";
  for (std::size_t t = 0; t < result.periods.size(); ++t) {
    const auto& period = result.periods[t];
    const std::string price = period.price ? format_short(*period.price) : "";
    for (std::size_t p = 0; p < period.players.size(); ++p) {
      const auto& pp = period.players[p];
      out << t << ',' << p << ',' << role_name(pp.role) << ','
          << format_short(pp.charge_start) << ',' << format_short(pp.load_delta) << ','
          << format_short(pp.trade_delta) << ',' << format_short(pp.charge_end) << ','
          << price << ',' << (period.market_ran ? (period.converged ? "true" : "false") : "")
          << '\n';
    }
  }
}

void write_timesim_text(const TimeSimResult& result, std::ostream& out) {
  write_schema(out, "timesim");
  for (std::size_t t = 0; t < result.periods.size(); ++t) {
    const auto& period = result.periods[t];
    out << "period " << t << " market " << yes_no(period.market_ran) << " price "
        << (period.price ? format_exact(*period.price) : "none") << '\n';
    for (std::size_t p = 0; p < period.players.size(); ++p) {
      const auto& pp = period.players[p];
      out << "player " << p << " role " << role_name(pp.role) << " start "
          << format_exact(pp.charge_start) << " load " << format_exact(pp.load_delta)
          << " trade " << format_exact(pp.trade_delta) << " end "
          << format_exact(pp.charge_end) << '\n';
    }
  }
}

}  // namespace storage_market
