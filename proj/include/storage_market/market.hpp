#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace storage_market {

/// Absolute tolerance for all energy-quantity comparisons (MWh). Step-curve
/// scans and allocations accumulate sums of user inputs; a fixed absolute
/// tolerance keeps them deterministic.
inline constexpr double kQuantityTol = 1e-9;

class MarketError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A market needs at least one seller and one buyer.
class EmptyMarketError : public MarketError {
 public:
  using MarketError::MarketError;
};

/// A profile violates its field constraints (negative price, zero bound, ...).
class InvalidProfileError : public MarketError {
 public:
  using MarketError::MarketError;
};

/// An offer vector is the wrong size or falls outside [0, capacity_bound].
class InvalidOffersError : public MarketError {
 public:
  using MarketError::MarketError;
};

/// One storage unit on the sell side.
struct SellerProfile {
  std::string id;
  double reservation_price = 0.0;  // $/MWh, below this the seller will not trade
  double capacity_bound = 0.0;     // MWh, maximum total energy offered
  double cost_weight = 0.0;        // $/MWh^2, quadratic discharge cost weight
};

/// One grid element on the buy side with a fixed energy requirement.
struct BuyerProfile {
  std::string id;
  double reservation_bid = 0.0;  // $/MWh, above this the buyer will not trade
  double demand = 0.0;           // MWh
};

/// Original agent folded into a canonical (possibly merged) agent.
struct GroupMember {
  std::size_t input_index = 0;
  std::string id;
};

/// Offered quantities per canonical seller, aligned with MarketInstance::sellers.
using StrategyVector = std::vector<double>;

/// A canonicalized market: sellers strictly ascending by reservation price,
/// buyers strictly descending by reservation bid. Agents that tied on
/// price/bid are merged into one virtual agent; the member tables map each
/// canonical agent back to the original inputs so allocations can be split.
struct MarketInstance {
  std::vector<SellerProfile> sellers;
  std::vector<BuyerProfile> buyers;
  std::vector<std::vector<GroupMember>> seller_members;
  std::vector<std::vector<GroupMember>> buyer_members;
  std::vector<std::size_t> seller_of_input;  // original seller index -> canonical index
  std::vector<std::size_t> buyer_of_input;

  std::size_t n_sellers() const { return sellers.size(); }
  std::size_t n_buyers() const { return buyers.size(); }

  /// Per-canonical-seller capacity bounds (the default initial strategy).
  StrategyVector capacity_bounds() const;
  /// Per-canonical-buyer demands.
  std::vector<double> demands() const;
};

/// Sorts both sides, merges exact price/bid ties into virtual agents
/// (capacity and demand sum; a merged seller's quadratic cost weight is the
/// series combination 1/sum(1/tau_j), the exact cost of an optimal internal
/// split), and records the membership mapping.
///
/// Throws EmptyMarketError when either side is empty and InvalidProfileError
/// on invalid fields or duplicate ids.
MarketInstance canonicalize_market(std::span<const SellerProfile> raw_sellers,
                                   std::span<const BuyerProfile> raw_buyers);

/// Result of intersecting the supply and demand step curves.
struct Intersection {
  std::size_t marginal_seller = 0;  // L, owner of the supply step at the crossing
  std::size_t marginal_buyer = 0;   // M, owner of the demand step at the crossing
  double scan_volume = 0.0;         // energy matched by the scan, before exclusion
};

/// Merged greedy scan of the supply curve (ascending price steps of size
/// offers[i]) against the demand curve (descending bid steps of size
/// demands[k]). Quantity is consumed pairwise while the pair is individually
/// rational (bid >= price); the marginal pair (L, M) is the last pair that
/// traded a positive quantity. Zero offers and zero demands are skipped but
/// keep their index positions. Returns nullopt when no rational pair trades.
std::optional<Intersection> find_intersection(const MarketInstance& market,
                                              std::span<const double> offers,
                                              std::span<const double> demands);

/// Midpoint trading price (s_L + b_M) / 2 for a valid marginal pair.
double trading_price(const MarketInstance& market, std::size_t marginal_seller,
                     std::size_t marginal_buyer);

/// Splits the participating sellers' offers against the participating demand.
/// When demand covers the total offered, everyone sells in full. Otherwise
/// every supplying seller carries an equal share of the oversupply; a seller
/// whose offer is below its share sells nothing and its uncovered remainder is
/// spread equally over the others, repeated until all shares are feasible.
/// Entries at or below kQuantityTol never count toward the equal split.
/// The returned quantities always sum to min(total offered, total_demand).
std::vector<double> allocate_supply(std::span<const double> offers, double total_demand);

/// Mirror of allocate_supply with roles swapped: buyers carry an equal share
/// of the over-demand when supply falls short.
std::vector<double> allocate_demand(std::span<const double> demands, double total_supply);

/// Full clearing result. Vectors are indexed by canonical agent; excluded and
/// non-participating agents hold zero.
struct AuctionOutcome {
  std::optional<double> trading_price;
  std::optional<std::size_t> marginal_seller;
  std::optional<std::size_t> marginal_buyer;
  std::vector<double> sold;
  std::vector<double> bought;
  std::vector<std::size_t> participated_sellers;  // i < L with a positive offer
  std::vector<std::size_t> participated_buyers;   // k < M with positive demand
  double volume = 0.0;  // total energy exchanged

  bool trade() const { return trading_price.has_value(); }
};

/// Runs the full double auction for one strategy vector: intersection,
/// midpoint price, and quantity allocation on both sides. The marginal seller
/// and buyer are excluded from trade. A market with no rational pair returns
/// an all-zero outcome with no price.
AuctionOutcome clear_market(const MarketInstance& market, std::span<const double> offers);

/// Reusable buffers for the allocation-free clearing path.
struct ClearScratch {
  std::vector<double> demands;
  std::vector<double> part_offers;
  std::vector<double> part_sold;
  std::vector<std::size_t> active;
};

struct SellerClear {
  double price = 0.0;
  double quantity = 0.0;  // energy sold by the queried seller
};

/// Price and sold quantity for a single seller, without building the full
/// outcome. Returns nullopt when the market does not trade at all.
std::optional<SellerClear> clear_for_seller(const MarketInstance& market,
                                            std::span<const double> offers,
                                            std::size_t seller, ClearScratch& scratch);

/// Quadratic-cost seller utility (price - s_i) * Q_i - tau_i * Q_i^2 at the
/// clearing of `offers`. Zero when the seller does not trade.
double utility(const MarketInstance& market, std::span<const double> offers,
               std::size_t seller, ClearScratch& scratch);
double utility(const MarketInstance& market, std::span<const double> offers,
               std::size_t seller);

/// Splits canonical per-agent allocations back onto the original inputs,
/// proportionally to the given per-input weights (offers for sellers, demands
/// for buyers). A group whose weights sum to zero splits equally.
std::vector<double> split_allocation(const std::vector<std::vector<GroupMember>>& members,
                                     std::span<const double> canonical_alloc,
                                     std::span<const double> input_weights,
                                     std::size_t input_count);

}  // namespace storage_market
