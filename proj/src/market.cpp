#include "storage_market/market.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace storage_market {

namespace {

void check_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw InvalidProfileError(what + " is not finite");
}

void validate_inputs(std::span<const SellerProfile> sellers,
                     std::span<const BuyerProfile> buyers) {
  if (sellers.empty()) throw EmptyMarketError("market has no sellers");
  if (buyers.empty()) throw EmptyMarketError("market has no buyers");

  std::unordered_set<std::string> ids;
  for (std::size_t i = 0; i < sellers.size(); ++i) {
    const auto& s = sellers[i];
    if (s.id.empty())
      throw InvalidProfileError("seller " + std::to_string(i) + " has an empty id");
    if (!ids.insert(s.id).second)
      throw InvalidProfileError("duplicate seller id '" + s.id + "'");
    check_finite(s.reservation_price, "seller '" + s.id + "' reservation price");
    check_finite(s.capacity_bound, "seller '" + s.id + "' capacity bound");
    check_finite(s.cost_weight, "seller '" + s.id + "' cost weight");
    if (s.reservation_price < 0.0)
      throw InvalidProfileError("seller '" + s.id + "' has a negative reservation price");
    if (s.capacity_bound <= 0.0)
      throw InvalidProfileError("seller '" + s.id + "' has a non-positive capacity bound");
    if (s.cost_weight <= 0.0)
      throw InvalidProfileError("seller '" + s.id + "' has a non-positive cost weight");
  }

  ids.clear();
  for (std::size_t k = 0; k < buyers.size(); ++k) {
    const auto& b = buyers[k];
    if (b.id.empty())
      throw InvalidProfileError("buyer " + std::to_string(k) + " has an empty id");
    if (!ids.insert(b.id).second)
      throw InvalidProfileError("duplicate buyer id '" + b.id + "'");
    check_finite(b.reservation_bid, "buyer '" + b.id + "' reservation bid");
    check_finite(b.demand, "buyer '" + b.id + "' demand");
    if (b.reservation_bid < 0.0)
      throw InvalidProfileError("buyer '" + b.id + "' has a negative reservation bid");
    if (b.demand <= 0.0)
      throw InvalidProfileError("buyer '" + b.id + "' has a non-positive demand");
  }
}

/// Equal-burden oversupply split, shared by allocate_supply/allocate_demand
/// and the scratch-based clearing path. `amounts` is what each entry wants to
/// move, `cap` is how much the other side absorbs. Writes into `out` (same
/// size as amounts); `active` is reusable index scratch.
void equal_burden(std::span<const double> amounts, double cap, std::span<double> out,
                  std::vector<std::size_t>& active) {
  std::fill(out.begin(), out.end(), 0.0);
  active.clear();
  double total = 0.0;
  for (std::size_t i = 0; i < amounts.size(); ++i) {
    if (amounts[i] > kQuantityTol) {
      active.push_back(i);
      total += amounts[i];
    }
  }
  if (active.empty() || cap <= kQuantityTol) return;

  if (total <= cap + kQuantityTol) {
    for (std::size_t i : active) out[i] = amounts[i];
    return;
  }

  // Cap infeasible entries and respread their shortfall until the equal
  // share is feasible for everyone left. The largest entry always satisfies
  // its share, so the active set cannot empty while cap > 0.
  double active_sum = total;
  for (;;) {
    const double share = (active_sum - cap) / static_cast<double>(active.size());
    bool dropped = false;
    for (std::size_t pos = 0; pos < active.size();) {
      const std::size_t i = active[pos];
      if (amounts[i] + kQuantityTol < share) {
        active_sum -= amounts[i];
        active[pos] = active.back();
        active.pop_back();
        dropped = true;
      } else {
        ++pos;
      }
    }
    if (!dropped) {
      for (std::size_t i : active) out[i] = std::max(0.0, amounts[i] - share);
      return;
    }
  }
}

struct Participants {
  double supply = 0.0;  // total offered by sellers i < L with a positive offer
  double demand = 0.0;  // total demanded by buyers k < M with positive demand
};

Participants participant_totals(const Intersection& is, std::span<const double> offers,
                                std::span<const double> demands) {
  Participants p;
  for (std::size_t i = 0; i < is.marginal_seller; ++i)
    if (offers[i] > kQuantityTol) p.supply += offers[i];
  for (std::size_t k = 0; k < is.marginal_buyer; ++k)
    if (demands[k] > kQuantityTol) p.demand += demands[k];
  return p;
}

void validate_offers(const MarketInstance& market, std::span<const double> offers) {
  if (offers.size() != market.n_sellers())
    throw InvalidOffersError("offer vector has " + std::to_string(offers.size()) +
                             " entries for " + std::to_string(market.n_sellers()) +
                             " sellers");
  for (std::size_t i = 0; i < offers.size(); ++i) {
    const double b = market.sellers[i].capacity_bound;
    if (!std::isfinite(offers[i]) || offers[i] < -kQuantityTol ||
        offers[i] > b + kQuantityTol)
      throw InvalidOffersError("offer for seller '" + market.sellers[i].id +
                               "' is outside [0, " + std::to_string(b) + "]");
  }
}

}  // namespace

StrategyVector MarketInstance::capacity_bounds() const {
  StrategyVector b(sellers.size());
  for (std::size_t i = 0; i < sellers.size(); ++i) b[i] = sellers[i].capacity_bound;
  return b;
}

std::vector<double> MarketInstance::demands() const {
  std::vector<double> x(buyers.size());
  for (std::size_t k = 0; k < buyers.size(); ++k) x[k] = buyers[k].demand;
  return x;
}

MarketInstance canonicalize_market(std::span<const SellerProfile> raw_sellers,
                                   std::span<const BuyerProfile> raw_buyers) {
  validate_inputs(raw_sellers, raw_buyers);

  MarketInstance m;
  m.seller_of_input.resize(raw_sellers.size());
  m.buyer_of_input.resize(raw_buyers.size());

  std::vector<std::size_t> order(raw_sellers.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return raw_sellers[a].reservation_price < raw_sellers[b].reservation_price;
  });
  for (std::size_t pos = 0; pos < order.size();) {
    const double price = raw_sellers[order[pos]].reservation_price;
    SellerProfile merged;
    merged.reservation_price = price;
    double inv_tau = 0.0;
    std::vector<GroupMember> members;
    std::size_t end = pos;
    while (end < order.size() && raw_sellers[order[end]].reservation_price == price) {
      const auto& s = raw_sellers[order[end]];
      merged.capacity_bound += s.capacity_bound;
      inv_tau += 1.0 / s.cost_weight;
      merged.id += merged.id.empty() ? s.id : "+" + s.id;
      members.push_back({order[end], s.id});
      m.seller_of_input[order[end]] = m.sellers.size();
      ++end;
    }
    merged.cost_weight = 1.0 / inv_tau;
    m.sellers.push_back(std::move(merged));
    m.seller_members.push_back(std::move(members));
    pos = end;
  }

  order.assign(raw_buyers.size(), 0);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return raw_buyers[a].reservation_bid > raw_buyers[b].reservation_bid;
  });
  for (std::size_t pos = 0; pos < order.size();) {
    const double bid = raw_buyers[order[pos]].reservation_bid;
    BuyerProfile merged;
    merged.reservation_bid = bid;
    std::vector<GroupMember> members;
    std::size_t end = pos;
    while (end < order.size() && raw_buyers[order[end]].reservation_bid == bid) {
      const auto& b = raw_buyers[order[end]];
      merged.demand += b.demand;
      merged.id += merged.id.empty() ? b.id : "+" + b.id;
      members.push_back({order[end], b.id});
      m.buyer_of_input[order[end]] = m.buyers.size();
      ++end;
    }
    m.buyers.push_back(std::move(merged));
    m.buyer_members.push_back(std::move(members));
    pos = end;
  }

  return m;
}

std::optional<Intersection> find_intersection(const MarketInstance& market,
                                              std::span<const double> offers,
                                              std::span<const double> demands) {
  const std::size_t ns = market.n_sellers();
  const std::size_t nb = market.n_buyers();

  auto next_seller = [&](std::size_t from) {
    while (from < ns && offers[from] <= kQuantityTol) ++from;
    return from;
  };
  auto next_buyer = [&](std::size_t from) {
    while (from < nb && demands[from] <= kQuantityTol) ++from;
    return from;
  };

  std::size_t i = next_seller(0);
  std::size_t k = next_buyer(0);
  double rem_offer = i < ns ? offers[i] : 0.0;
  double rem_demand = k < nb ? demands[k] : 0.0;

  std::optional<Intersection> last;
  double volume = 0.0;
  while (i < ns && k < nb &&
         market.buyers[k].reservation_bid >= market.sellers[i].reservation_price) {
    const double q = std::min(rem_offer, rem_demand);
    volume += q;
    last = Intersection{i, k, volume};
    rem_offer -= q;
    rem_demand -= q;
    if (rem_offer <= kQuantityTol) {
      i = next_seller(i + 1);
      if (i < ns) rem_offer = offers[i];
    }
    if (rem_demand <= kQuantityTol) {
      k = next_buyer(k + 1);
      if (k < nb) rem_demand = demands[k];
    }
  }
  return last;
}

double trading_price(const MarketInstance& market, std::size_t marginal_seller,
                     std::size_t marginal_buyer) {
  return 0.5 * (market.sellers.at(marginal_seller).reservation_price +
                market.buyers.at(marginal_buyer).reservation_bid);
}

std::vector<double> allocate_supply(std::span<const double> offers, double total_demand) {
  std::vector<double> sold(offers.size(), 0.0);
  std::vector<std::size_t> active;
  equal_burden(offers, total_demand, sold, active);
  return sold;
}

std::vector<double> allocate_demand(std::span<const double> demands, double total_supply) {
  std::vector<double> bought(demands.size(), 0.0);
  std::vector<std::size_t> active;
  equal_burden(demands, total_supply, bought, active);
  return bought;
}

AuctionOutcome clear_market(const MarketInstance& market, std::span<const double> offers) {
  validate_offers(market, offers);

  AuctionOutcome out;
  out.sold.assign(market.n_sellers(), 0.0);
  out.bought.assign(market.n_buyers(), 0.0);

  const std::vector<double> demands = market.demands();
  const auto is = find_intersection(market, offers, demands);
  if (!is) return out;

  out.marginal_seller = is->marginal_seller;
  out.marginal_buyer = is->marginal_buyer;
  out.trading_price = trading_price(market, is->marginal_seller, is->marginal_buyer);

  const auto totals = participant_totals(*is, offers, demands);

  // Marginal agents set the price and are excluded from trade; the sides
  // that remain split min(supply, demand) with equal oversupply burden.
  std::vector<double> part_offers;
  for (std::size_t i = 0; i < is->marginal_seller; ++i) {
    if (offers[i] > kQuantityTol) {
      out.participated_sellers.push_back(i);
      part_offers.push_back(offers[i]);
    }
  }
  std::vector<double> part_demands;
  for (std::size_t k = 0; k < is->marginal_buyer; ++k) {
    if (demands[k] > kQuantityTol) {
      out.participated_buyers.push_back(k);
      part_demands.push_back(demands[k]);
    }
  }

  const std::vector<double> part_sold = allocate_supply(part_offers, totals.demand);
  const std::vector<double> part_bought = allocate_demand(part_demands, totals.supply);
  for (std::size_t p = 0; p < out.participated_sellers.size(); ++p) {
    out.sold[out.participated_sellers[p]] = part_sold[p];
    out.volume += part_sold[p];
  }
  for (std::size_t p = 0; p < out.participated_buyers.size(); ++p)
    out.bought[out.participated_buyers[p]] = part_bought[p];

  return out;
}

std::optional<SellerClear> clear_for_seller(const MarketInstance& market,
                                            std::span<const double> offers,
                                            std::size_t seller, ClearScratch& scratch) {
  const std::size_t nb = market.n_buyers();
  scratch.demands.resize(nb);
  for (std::size_t k = 0; k < nb; ++k) scratch.demands[k] = market.buyers[k].demand;

  const auto is = find_intersection(market, offers, scratch.demands);
  if (!is) return std::nullopt;

  SellerClear r;
  r.price = trading_price(market, is->marginal_seller, is->marginal_buyer);
  if (seller >= is->marginal_seller || offers[seller] <= kQuantityTol) return r;

  double part_demand = 0.0;
  for (std::size_t k = 0; k < is->marginal_buyer; ++k)
    if (scratch.demands[k] > kQuantityTol) part_demand += scratch.demands[k];

  double part_supply = 0.0;
  scratch.part_offers.clear();
  std::size_t slot = 0;
  std::size_t seller_slot = 0;
  for (std::size_t i = 0; i < is->marginal_seller; ++i) {
    if (offers[i] > kQuantityTol) {
      if (i == seller) seller_slot = slot;
      scratch.part_offers.push_back(offers[i]);
      part_supply += offers[i];
      ++slot;
    }
  }

  if (part_supply <= part_demand + kQuantityTol) {
    r.quantity = offers[seller];
    return r;
  }
  scratch.part_sold.resize(scratch.part_offers.size());
  equal_burden(scratch.part_offers, part_demand, scratch.part_sold, scratch.active);
  r.quantity = scratch.part_sold[seller_slot];
  return r;
}

double utility(const MarketInstance& market, std::span<const double> offers,
               std::size_t seller, ClearScratch& scratch) {
  const auto c = clear_for_seller(market, offers, seller, scratch);
  if (!c || c->quantity <= kQuantityTol) return 0.0;
  const auto& s = market.sellers[seller];
  return (c->price - s.reservation_price) * c->quantity -
         s.cost_weight * c->quantity * c->quantity;
}

double utility(const MarketInstance& market, std::span<const double> offers,
               std::size_t seller) {
  ClearScratch scratch;
  return utility(market, offers, seller, scratch);
}

std::vector<double> split_allocation(const std::vector<std::vector<GroupMember>>& members,
                                     std::span<const double> canonical_alloc,
                                     std::span<const double> input_weights,
                                     std::size_t input_count) {
  std::vector<double> out(input_count, 0.0);
  for (std::size_t g = 0; g < members.size(); ++g) {
    const auto& group = members[g];
    double weight_sum = 0.0;
    for (const auto& mem : group) weight_sum += input_weights[mem.input_index];
    for (const auto& mem : group) {
      const double share = weight_sum > kQuantityTol
                               ? input_weights[mem.input_index] / weight_sum
                               : 1.0 / static_cast<double>(group.size());
      out[mem.input_index] = canonical_alloc[g] * share;
    }
  }
  return out;
}

}  // namespace storage_market
