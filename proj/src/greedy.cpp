#include "storage_market/greedy.hpp"

#include <algorithm>

namespace storage_market {

GreedyResult run_greedy(const MarketInstance& market) {
  const std::size_t ns = market.n_sellers();
  const std::size_t nb = market.n_buyers();

  GreedyResult result;
  result.sold.assign(ns, 0.0);
  result.bought.assign(nb, 0.0);
  result.utilities.assign(ns, 0.0);

  std::vector<double> remaining(nb);
  for (std::size_t k = 0; k < nb; ++k) remaining[k] = market.buyers[k].demand;

  // Cheapest sellers move first; each grabs the best remaining buyer per
  // pass. A seller trades with at most one buyer per pass, so every pass
  // either exhausts a buyer or finishes a seller and the rounds are finite.
  bool traded = true;
  while (traded) {
    traded = false;
    for (std::size_t i = 0; i < ns; ++i) {
      const auto& s = market.sellers[i];
      const double capacity_left = s.capacity_bound - result.sold[i];
      if (capacity_left <= kQuantityTol) continue;

      // Buyers are stored in descending bid order.
      std::size_t k = 0;
      while (k < nb && (remaining[k] <= kQuantityTol ||
                        market.buyers[k].reservation_bid <= s.reservation_price))
        ++k;
      if (k == nb) continue;

      const double price = 0.5 * (s.reservation_price + market.buyers[k].reservation_bid);
      // Myopic optimum for this price given the energy already discharged.
      const double target = (price - s.reservation_price) / (2.0 * s.cost_weight);
      const double q =
          std::min({target - result.sold[i], capacity_left, remaining[k]});
      if (q <= kQuantityTol) continue;

      result.matches.push_back({i, k, price, q});
      result.sold[i] += q;
      result.bought[k] += q;
      remaining[k] -= q;
      traded = true;
    }
  }

  for (const auto& match : result.matches) {
    const auto& s = market.sellers[match.seller];
    result.utilities[match.seller] +=
        (match.price - s.reservation_price) * match.quantity;
  }
  for (std::size_t i = 0; i < ns; ++i)
    if (result.sold[i] > kQuantityTol)
      result.utilities[i] -=
          market.sellers[i].cost_weight * result.sold[i] * result.sold[i];

  return result;
}

}  // namespace storage_market
