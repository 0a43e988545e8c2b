#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "storage_market/game.hpp"
#include "storage_market/greedy.hpp"
#include "storage_market/harness.hpp"
#include "storage_market/market.hpp"

namespace storage_market {

class ParseError : public MarketError {
 public:
  using MarketError::MarketError;
};

/// %.6g, for human-facing reports and CSV cells.
std::string format_short(double v);
/// %.17g, round-trips an IEEE double exactly.
std::string format_exact(double v);

// Structured-text files open with "schema: storage-market/<kind> v1" and
// carry one whitespace-separated record per line; '#' starts a comment.
// Parsers name the source and line of the first offending record.

void write_instance(const MarketInstance& market, std::ostream& out);
std::pair<std::vector<SellerProfile>, std::vector<BuyerProfile>> read_profiles(
    std::istream& in, const std::string& source);
MarketInstance read_instance(std::istream& in, const std::string& source);

void write_strategy(const MarketInstance& market, std::span<const double> offers,
                    std::ostream& out);
/// Expects one "offer <id> <value>" line per canonical seller.
StrategyVector read_strategy(const MarketInstance& market, std::istream& in,
                             const std::string& source);

/// "load <period> <player> <delta>" lines, zero-based indices; absent cells
/// are zero.
std::vector<std::vector<double>> read_load_profile(std::istream& in,
                                                   const std::string& source);

void write_outcome_text(const MarketInstance& market, const AuctionOutcome& outcome,
                        std::ostream& out);
void write_outcome_csv(const MarketInstance& market, const AuctionOutcome& outcome,
                       std::ostream& out);

void write_solve_text(const MarketInstance& market, const DynamicsTrace& trace,
                      const GameConfig& config, std::ostream& out);
/// One row per iteration: offers and utilities per canonical seller.
void write_trace_csv(const MarketInstance& market, const DynamicsTrace& trace,
                     std::ostream& out);

void write_greedy_text(const MarketInstance& market, const GreedyResult& result,
                       std::ostream& out);
void write_greedy_csv(const MarketInstance& market, const GreedyResult& result,
                      std::ostream& out);

void write_compare_text(const MarketInstance& market, const DynamicsTrace& trace,
                        const GreedyResult& greedy, std::ostream& out);
void write_compare_csv(const MarketInstance& market, const DynamicsTrace& trace,
                       const GreedyResult& greedy, std::ostream& out);

void write_verify_text(const MarketInstance& market, const NashReport& report,
                       std::ostream& out);
void write_verify_csv(const MarketInstance& market, const NashReport& report,
                      std::ostream& out);

/// Aggregate utilities, one row per (cell, algorithm):
/// k,n,algorithm,mean_utility,std_utility,runs (tau column after n when
/// with_tau is set). An empty report still writes the header row.
void write_aggregate_csv(const ExperimentReport& report, std::ostream& out,
                         bool with_tau);
void write_iterations_csv(const ExperimentReport& report, std::ostream& out);
void write_actions_csv(const ExperimentReport& report, std::ostream& out);
void write_raw_csv(const ExperimentReport& report, std::ostream& out);
void write_report_text(const ExperimentReport& report, std::ostream& out);

void write_timesim_csv(const TimeSimResult& result, std::ostream& out);
void write_timesim_text(const TimeSimResult& result, std::ostream& out);

}  // namespace storage_market
