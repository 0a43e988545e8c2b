#pragma once

#include <cstddef>
#include <vector>

#include "storage_market/market.hpp"

namespace storage_market {

/// One pairwise greedy trade.
struct GreedyMatch {
  std::size_t seller = 0;  // canonical indices
  std::size_t buyer = 0;
  double price = 0.0;      // midpoint of the pair's reservation values
  double quantity = 0.0;
};

struct GreedyResult {
  std::vector<GreedyMatch> matches;
  std::vector<double> sold;       // per canonical seller
  std::vector<double> bought;     // per canonical buyer
  std::vector<double> utilities;  // per canonical seller, quadratic-cost
};

/// Myopic pairwise baseline without an auctioneer. Sellers act in ascending
/// price order; each repeatedly matches the highest-bid buyer still paying
/// more than its reservation price. A match trades at the midpoint price and
/// moves the seller's myopically optimal increment (p - s_i) / (2 tau_i)
/// minus what it already sold, clamped by remaining capacity and the buyer's
/// remaining demand. Rounds repeat until no rational pair can trade a
/// positive quantity.
GreedyResult run_greedy(const MarketInstance& market);

}  // namespace storage_market
