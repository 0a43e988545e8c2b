#include <doctest.h>

#include <cmath>
#include <vector>

#include <storage_market/greedy.hpp>
#include <storage_market/harness.hpp>
#include <storage_market/market.hpp>
#include <storage_market/rng.hpp>

using namespace storage_market;

namespace {

SellerProfile seller(const char* id, double price, double bound, double tau = 0.5) {
  SellerProfile s;
  s.id = id;
  s.reservation_price = price;
  s.capacity_bound = bound;
  s.cost_weight = tau;
  return s;
}

BuyerProfile buyer(const char* id, double bid, double demand) {
  BuyerProfile b;
  b.id = id;
  b.reservation_bid = bid;
  b.demand = demand;
  return b;
}

}  // namespace

TEST_CASE("a single pair trades the myopic optimum at the midpoint") {
  const MarketInstance m =
      canonicalize_market(std::vector<SellerProfile>{seller("s1", 10, 100)},
                          std::vector<BuyerProfile>{buyer("b1", 30, 50)});
  const GreedyResult r = run_greedy(m);

  REQUIRE(r.matches.size() == 1);
  CHECK(r.matches[0].seller == 0);
  CHECK(r.matches[0].buyer == 0);
  CHECK(r.matches[0].price == doctest::Approx(20.0));
  // (20 - 10) / (2 * 0.5) = 10 MWh, well under both caps.
  CHECK(r.matches[0].quantity == doctest::Approx(10.0));
  CHECK(r.sold[0] == doctest::Approx(10.0));
  CHECK(r.bought[0] == doctest::Approx(10.0));
  CHECK(r.utilities[0] == doctest::Approx(50.0));
}

TEST_CASE("later matches shrink with the cumulative discharge cost") {
  const MarketInstance m = canonicalize_market(
      std::vector<SellerProfile>{seller("s1", 10, 100)},
      std::vector<BuyerProfile>{buyer("b1", 30, 4), buyer("b2", 26, 50)});
  const GreedyResult r = run_greedy(m);

  // First pass: the 30-bid buyer only takes 4 of the 10 MWh target. Second
  // pass: at midpoint 18 the target is 8 total, so 4 more go to the 26-bid
  // buyer, after which the seller is saturated for every remaining price.
  REQUIRE(r.matches.size() == 2);
  CHECK(r.matches[0].buyer == 0);
  CHECK(r.matches[0].price == doctest::Approx(20.0));
  CHECK(r.matches[0].quantity == doctest::Approx(4.0));
  CHECK(r.matches[1].buyer == 1);
  CHECK(r.matches[1].price == doctest::Approx(18.0));
  CHECK(r.matches[1].quantity == doctest::Approx(4.0));
  CHECK(r.sold[0] == doctest::Approx(8.0));
  // 10*4 + 8*4 - 0.5*64 = 40.
  CHECK(r.utilities[0] == doctest::Approx(40.0));
}

TEST_CASE("cheap sellers pick first when demand is scarce") {
  const MarketInstance m = canonicalize_market(
      std::vector<SellerProfile>{seller("s1", 10, 5), seller("s2", 20, 5)},
      std::vector<BuyerProfile>{buyer("b1", 30, 6)});
  const GreedyResult r = run_greedy(m);

  REQUIRE(r.matches.size() == 2);
  CHECK(r.matches[0].seller == 0);
  CHECK(r.matches[0].quantity == doctest::Approx(5.0));
  CHECK(r.matches[1].seller == 1);
  CHECK(r.matches[1].quantity == doctest::Approx(1.0));
  CHECK(r.utilities[0] == doctest::Approx(37.5));
  CHECK(r.utilities[1] == doctest::Approx(4.5));
}

TEST_CASE("no match happens without a rational pair") {
  const MarketInstance m = canonicalize_market(
      std::vector<SellerProfile>{seller("s1", 40, 10), seller("s2", 45, 10)},
      std::vector<BuyerProfile>{buyer("b1", 30, 20), buyer("b2", 40, 20)});
  const GreedyResult r = run_greedy(m);
  CHECK(r.matches.empty());
  for (double u : r.utilities) CHECK(u == 0.0);
  for (double q : r.sold) CHECK(q == 0.0);
  for (double q : r.bought) CHECK(q == 0.0);
}

TEST_CASE("greedy invariants hold on seeded instances") {
  for (std::uint64_t s = 1; s <= 150; ++s) {
    InstanceSpec spec;
    spec.n_sellers = 2 + s % 7;
    spec.n_buyers = 2 + (s / 2) % 6;
    spec.seed = derive_seed(515, s);
    const MarketInstance m = generate_instance(spec);
    const GreedyResult r = run_greedy(m);

    REQUIRE(r.sold.size() == m.n_sellers());
    REQUIRE(r.bought.size() == m.n_buyers());
    // Bounded rounds: each seller exhausts a buyer, its capacity, or its
    // price target with every match.
    CHECK(r.matches.size() <= m.n_sellers() * (m.n_buyers() + 1));

    std::vector<double> sold(m.n_sellers(), 0.0);
    std::vector<double> bought(m.n_buyers(), 0.0);
    std::vector<double> gross(m.n_sellers(), 0.0);
    for (const GreedyMatch& match : r.matches) {
      REQUIRE(match.seller < m.n_sellers());
      REQUIRE(match.buyer < m.n_buyers());
      const double s_i = m.sellers[match.seller].reservation_price;
      const double b_k = m.buyers[match.buyer].reservation_bid;
      // Individually rational both ways, priced at the pair midpoint.
      CHECK(b_k > s_i);
      CHECK(match.price == doctest::Approx(0.5 * (s_i + b_k)));
      CHECK(match.quantity > 0.0);
      sold[match.seller] += match.quantity;
      bought[match.buyer] += match.quantity;
      gross[match.seller] += (match.price - s_i) * match.quantity;
    }
    for (std::size_t i = 0; i < m.n_sellers(); ++i) {
      CHECK(sold[i] <= m.sellers[i].capacity_bound + kQuantityTol);
      CHECK(std::abs(sold[i] - r.sold[i]) <= kQuantityTol);
      const double tau = m.sellers[i].cost_weight;
      const double want =
          sold[i] > kQuantityTol ? gross[i] - tau * r.sold[i] * r.sold[i] : 0.0;
      CHECK(r.utilities[i] == doctest::Approx(want).epsilon(1e-12).scale(1));
    }
    for (std::size_t k = 0; k < m.n_buyers(); ++k) {
      CHECK(bought[k] <= m.buyers[k].demand + kQuantityTol);
      CHECK(std::abs(bought[k] - r.bought[k]) <= kQuantityTol);
    }
  }
}
