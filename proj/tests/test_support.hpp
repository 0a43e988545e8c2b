#pragma once

// Shared helpers for the unit and acceptance suites: independent oracles and
// misreport machinery kept deliberately separate from the library code paths.

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "storage_market/market.hpp"

namespace smtest {

using namespace storage_market;

inline SellerProfile seller(std::string id, double price, double bound, double tau = 0.5) {
  return {std::move(id), price, bound, tau};
}

inline BuyerProfile buyer(std::string id, double bid, double demand) {
  return {std::move(id), bid, demand};
}

/// Independent equal-burden oracle. Instead of iterating the cap-and-respread
/// loop, it sorts the positive entries and searches for the unique drop prefix
/// that is self-consistent with its own burden share: every dropped entry
/// falls below the share computed from the kept suffix, every kept entry does
/// not.
inline std::vector<double> oracle_allocate(std::span<const double> amounts, double cap) {
  const std::size_t n = amounts.size();
  std::vector<double> out(n, 0.0);

  std::vector<std::size_t> pos;  // positive entries, ascending by amount
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (amounts[i] > kQuantityTol) {
      pos.push_back(i);
      total += amounts[i];
    }
  }
  if (pos.empty() || cap <= kQuantityTol) return out;
  if (total <= cap + kQuantityTol) {
    for (std::size_t i : pos) out[i] = amounts[i];
    return out;
  }
  std::sort(pos.begin(), pos.end(),
            [&](std::size_t a, std::size_t b) { return amounts[a] < amounts[b]; });

  double suffix_sum = total;
  for (std::size_t drop = 0; drop < pos.size(); ++drop) {
    const double share = (suffix_sum - cap) / static_cast<double>(pos.size() - drop);
    const bool dropped_ok =
        drop == 0 || amounts[pos[drop - 1]] + kQuantityTol < share;
    const bool kept_ok = amounts[pos[drop]] + kQuantityTol >= share;
    if (dropped_ok && kept_ok) {
      for (std::size_t p = drop; p < pos.size(); ++p)
        out[pos[p]] = std::max(0.0, amounts[pos[p]] - share);
      return out;
    }
    suffix_sum -= amounts[pos[drop]];
  }
  return out;  // unreachable for cap > 0: the largest entry always keeps
}

struct RawMarket {
  std::vector<SellerProfile> sellers;
  std::vector<BuyerProfile> buyers;
};

/// Clears the reported market at capacity-bound offers and maps quantities
/// back onto the original agents.
struct ClearedRaw {
  std::optional<double> price;
  std::vector<double> sold;    // by raw seller index
  std::vector<double> bought;  // by raw buyer index
};

inline ClearedRaw clear_raw(const RawMarket& reported) {
  const MarketInstance market =
      canonicalize_market(reported.sellers, reported.buyers);
  const AuctionOutcome out = clear_market(market, market.capacity_bounds());

  ClearedRaw r;
  r.price = out.trading_price;
  std::vector<double> seller_weights(reported.sellers.size());
  for (std::size_t i = 0; i < reported.sellers.size(); ++i)
    seller_weights[i] = reported.sellers[i].capacity_bound;
  std::vector<double> buyer_weights(reported.buyers.size());
  for (std::size_t k = 0; k < reported.buyers.size(); ++k)
    buyer_weights[k] = reported.buyers[k].demand;
  r.sold = split_allocation(market.seller_members, out.sold, seller_weights,
                            reported.sellers.size());
  r.bought = split_allocation(market.buyer_members, out.bought, buyer_weights,
                              reported.buyers.size());
  return r;
}

/// Exchange payoff of one seller at true valuation when it reports
/// `reported_price` and everyone else reports truthfully.
inline double seller_report_payoff(const RawMarket& truth, std::size_t idx,
                                   double reported_price) {
  RawMarket reported = truth;
  reported.sellers[idx].reservation_price = reported_price;
  const ClearedRaw r = clear_raw(reported);
  if (!r.price || r.sold[idx] <= kQuantityTol) return 0.0;
  return (*r.price - truth.sellers[idx].reservation_price) * r.sold[idx];
}

/// Exchange payoff of one buyer at true valuation when it reports
/// `reported_bid` and everyone else reports truthfully.
inline double buyer_report_payoff(const RawMarket& truth, std::size_t idx,
                                  double reported_bid) {
  RawMarket reported = truth;
  reported.buyers[idx].reservation_bid = reported_bid;
  const ClearedRaw r = clear_raw(reported);
  if (!r.price || r.bought[idx] <= kQuantityTol) return 0.0;
  return (truth.buyers[idx].reservation_bid - *r.price) * r.bought[idx];
}

}  // namespace smtest
