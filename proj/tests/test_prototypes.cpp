#include "doctest.h"

#include <cmath>
#include <random>

#include "caseval/prototypes.hpp"
#include "oracles.hpp"

using namespace caseval;

namespace {

FeatureMap make_features(int w, int h, int c, const std::vector<float>& v) {
  FeatureMap f;
  f.width = w;
  f.height = h;
  f.channels = c;
  f.values = v;
  return f;
}

ClassMask make_mask(int w, int h, const std::vector<std::uint32_t>& labels) {
  ClassMask m;
  m.width = w;
  m.height = h;
  m.labels = labels;
  return m;
}

Eigen::MatrixXd distances_1d(const std::vector<double>& xs) {
  const int n = static_cast<int>(xs.size());
  Eigen::MatrixXd d(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) d(i, j) = std::abs(xs[i] - xs[j]);
  }
  return d;
}

std::vector<std::uint32_t> iota_ids(int n) {
  std::vector<std::uint32_t> ids(n);
  for (int i = 0; i < n; ++i) ids[i] = static_cast<std::uint32_t>(i + 1);
  return ids;
}

}  // namespace

TEST_CASE("masked_average_pool") {
  SUBCASE("constant feature value over the masked region") {
    const FeatureMap f = make_features(2, 2, 1, {3.0f, 3.0f, 3.0f, 3.0f});
    const ClassMask m = make_mask(2, 2, {1, 1, 0, 1});
    const Prototype p = masked_average_pool({{&f, &m}}, 1);
    CHECK(p.vec == std::vector<double>{3.0});
    CHECK(p.support == 3);
  }

  SUBCASE("two pixels (1,0) and (3,4) average to (2,2)") {
    const FeatureMap f = make_features(2, 1, 2, {1.0f, 0.0f, 3.0f, 4.0f});
    const ClassMask m = make_mask(2, 1, {5, 5});
    const Prototype p = masked_average_pool({{&f, &m}}, 5);
    CHECK(p.vec[0] == 2.0);
    CHECK(p.vec[1] == 2.0);
  }

  SUBCASE("absent class is an error, not a zero vector") {
    const FeatureMap f = make_features(2, 1, 1, {1.0f, 2.0f});
    const ClassMask m = make_mask(2, 1, {1, 1});
    CHECK_THROWS_AS(masked_average_pool({{&f, &m}}, 9), std::invalid_argument);
  }

  SUBCASE("a mask at 2x the feature grid is sampled at cell centers") {
    const FeatureMap f = make_features(1, 1, 1, {4.0f});
    // 2x2 mask; the center sample (1,1) carries class 3.
    const ClassMask m = make_mask(2, 2, {0, 0, 0, 3});
    const Prototype p = masked_average_pool({{&f, &m}}, 3);
    CHECK(p.support == 1);
    CHECK(p.vec[0] == 4.0);
  }

  SUBCASE("a mask that does not tile the feature grid is rejected") {
    const FeatureMap f = make_features(2, 2, 1, {1, 1, 1, 1});
    const ClassMask m = make_mask(3, 3, std::vector<std::uint32_t>(9, 1));
    CHECK_THROWS_AS(masked_average_pool({{&f, &m}}, 1), std::invalid_argument);
  }

  SUBCASE("union of batches equals the support-weighted mean") {
    std::mt19937_64 rng(21);
    auto random_batch = [&](int w, int h) {
      std::vector<float> vals(std::size_t(w) * h * 3);
      for (auto& v : vals) v = float(rng() % 1000) / 100.0f;
      std::vector<std::uint32_t> labels(std::size_t(w) * h);
      for (auto& l : labels) l = rng() % 3;  // classes 0 (ignored), 1, 2
      return std::pair(make_features(w, h, 3, vals), make_mask(w, h, labels));
    };
    const auto [f1, m1] = random_batch(6, 5);
    const auto [f2, m2] = random_batch(4, 7);
    const Prototype a = masked_average_pool({{&f1, &m1}}, 1);
    const Prototype b = masked_average_pool({{&f2, &m2}}, 1);
    const Prototype both = masked_average_pool({{&f1, &m1}, {&f2, &m2}}, 1);
    CHECK(both.support == a.support + b.support);
    for (int c = 0; c < 3; ++c) {
      const double weighted =
          (a.vec[c] * double(a.support) + b.vec[c] * double(b.support)) /
          double(a.support + b.support);
      CHECK(both.vec[c] == doctest::Approx(weighted).epsilon(1e-10));
    }
  }

  SUBCASE("translation shifts prototypes and leaves distances unchanged") {
    const FeatureMap f = make_features(2, 2, 2, {1, 2, 5, 1, 0, 3, 2, 2});
    const ClassMask m = make_mask(2, 2, {1, 1, 2, 2});
    FeatureMap shifted = f;
    const double w0 = 2.5, w1 = -1.25;
    for (std::size_t i = 0; i < shifted.values.size(); i += 2) {
      shifted.values[i] += float(w0);
      shifted.values[i + 1] += float(w1);
    }
    const auto base = pool_all_classes({{&f, &m}});
    const auto moved = pool_all_classes({{&shifted, &m}});
    REQUIRE(base.size() == moved.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
      CHECK(moved[i].vec[0] == doctest::Approx(base[i].vec[0] + w0).epsilon(1e-12));
      CHECK(moved[i].vec[1] == doctest::Approx(base[i].vec[1] + w1).epsilon(1e-12));
    }
    const Eigen::MatrixXd d0 = pairwise_distances(base);
    const Eigen::MatrixXd d1 = pairwise_distances(moved);
    CHECK((d0 - d1).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("pairwise_distances") {
  SUBCASE("3-4-5 triangle") {
    std::vector<Prototype> ps(2);
    ps[0].vec = {0.0, 0.0};
    ps[1].vec = {3.0, 4.0};
    const Eigen::MatrixXd d = pairwise_distances(ps);
    CHECK(d(0, 1) == 5.0);
    CHECK(d(1, 0) == 5.0);
    CHECK(d(0, 0) == 0.0);
  }

  SUBCASE("identical prototypes are at distance 0") {
    std::vector<Prototype> ps(2);
    ps[0].vec = {1.5, -2.0, 7.0};
    ps[1].vec = ps[0].vec;
    CHECK(pairwise_distances(ps)(0, 1) == 0.0);
  }

  SUBCASE("random prototypes match the per-component oracle") {
    std::mt19937_64 rng(17);
    std::vector<Prototype> ps(5);
    for (auto& p : ps) {
      p.vec.resize(4);
      for (auto& x : p.vec) x = double(rng() % 2000) / 100.0 - 10.0;
    }
    const Eigen::MatrixXd d = pairwise_distances(ps);
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 5; ++j) {
        double sum = 0.0;
        for (int c = 0; c < 4; ++c) {
          sum += (ps[i].vec[c] - ps[j].vec[c]) * (ps[i].vec[c] - ps[j].vec[c]);
        }
        CHECK(d(i, j) == doctest::Approx(std::sqrt(sum)).epsilon(1e-12));
        CHECK(d(i, j) == d(j, i));
      }
    }
  }

  SUBCASE("mixed dimensionalities are rejected") {
    std::vector<Prototype> ps(2);
    ps[0].vec = {1.0};
    ps[1].vec = {1.0, 2.0};
    CHECK_THROWS_AS(pairwise_distances(ps), std::invalid_argument);
  }
}

TEST_CASE("agglomerative_cluster") {
  SUBCASE("1-D points 0, 1, 10 merge at heights 1 then 9.5") {
    const Dendrogram d =
        agglomerative_cluster(distances_1d({0.0, 1.0, 10.0}), iota_ids(3));
    REQUIRE(d.merges.size() == 2);
    CHECK(d.merges[0].left == 0);
    CHECK(d.merges[0].right == 1);
    CHECK(d.merges[0].height == 1.0);
    CHECK(d.merges[1].left == 2);
    CHECK(d.merges[1].right == 3);
    CHECK(d.merges[1].height == 9.5);
  }

  SUBCASE("two identical prototypes merge once at height 0") {
    const Dendrogram d =
        agglomerative_cluster(distances_1d({4.0, 4.0}), iota_ids(2));
    REQUIRE(d.merges.size() == 1);
    CHECK(d.merges[0].height == 0.0);
  }

  SUBCASE("ties break on the smallest node pair") {
    // d(0,1) == d(1,2) == 2; (0,1) must win.
    const Dendrogram d =
        agglomerative_cluster(distances_1d({0.0, 2.0, 4.0}), iota_ids(3));
    CHECK(d.merges[0].left == 0);
    CHECK(d.merges[0].right == 1);
  }

  SUBCASE("fewer than 2 items is an error") {
    CHECK_THROWS_AS(agglomerative_cluster(Eigen::MatrixXd::Zero(1, 1), {1u}),
                    std::invalid_argument);
  }

  SUBCASE("random instances equal the exhaustive-recompute oracle") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 20; ++trial) {
      const int n = 3 + int(rng() % 6);
      std::vector<Prototype> ps(n);
      for (auto& p : ps) {
        p.vec = {double(rng() % 10000) / 100.0, double(rng() % 10000) / 100.0};
      }
      const Eigen::MatrixXd d = pairwise_distances(ps);
      for (Linkage linkage :
           {Linkage::kAverage, Linkage::kSingle, Linkage::kComplete}) {
        const Dendrogram fast = agglomerative_cluster(d, iota_ids(n), linkage);
        const Dendrogram brute =
            oracles::brute_force_linkage(d, iota_ids(n), linkage);
        REQUIRE(fast.merges.size() == brute.merges.size());
        for (std::size_t k = 0; k < fast.merges.size(); ++k) {
          CHECK(fast.merges[k].left == brute.merges[k].left);
          CHECK(fast.merges[k].right == brute.merges[k].right);
          CHECK(fast.merges[k].height ==
                doctest::Approx(brute.merges[k].height).epsilon(1e-9));
        }
      }
    }
  }

  SUBCASE("average-linkage heights never decrease") {
    std::mt19937_64 rng(32);
    for (int trial = 0; trial < 20; ++trial) {
      const int n = 3 + int(rng() % 6);
      Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
      for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
          d(i, j) = d(j, i) = double(rng() % 1000) / 10.0;
        }
      }
      const Dendrogram tree = agglomerative_cluster(d, iota_ids(n));
      for (std::size_t k = 1; k < tree.merges.size(); ++k) {
        CHECK(tree.merges[k].height >= tree.merges[k - 1].height);
      }
    }
  }

  SUBCASE("uniform feature scaling scales heights and keeps the structure") {
    std::vector<Prototype> ps(5);
    std::mt19937_64 rng(33);
    for (auto& p : ps) {
      p.vec = {double(rng() % 1000) / 10.0, double(rng() % 1000) / 10.0};
    }
    const Dendrogram base =
        agglomerative_cluster(pairwise_distances(ps), iota_ids(5));
    const double scale = 3.5;
    for (auto& p : ps) {
      for (auto& x : p.vec) x *= scale;
    }
    const Dendrogram scaled =
        agglomerative_cluster(pairwise_distances(ps), iota_ids(5));
    for (std::size_t k = 0; k < base.merges.size(); ++k) {
      CHECK(scaled.merges[k].left == base.merges[k].left);
      CHECK(scaled.merges[k].right == base.merges[k].right);
      CHECK(scaled.merges[k].height ==
            doctest::Approx(base.merges[k].height * scale).epsilon(1e-12));
    }
  }
}

TEST_CASE("dendrogram serialization") {
  SUBCASE("a single merge serializes to a two-leaf tree") {
    const Dendrogram d =
        agglomerative_cluster(distances_1d({1.0, 2.0}), {7u, 9u});
    const auto doc = serialize_dendrogram(d, {{7, "barrel"}, {9, "cone"}});
    CHECK(doc.at("leaves").size() == 2);
    CHECK(doc.at("root").at("children").size() == 2);
    CHECK(doc.at("root").at("height").get<double>() == 1.0);
    CHECK(doc.at("root").at("children")[0].at("name") == "barrel");
  }

  SUBCASE("the 0,1,10 dendrogram carries heights 1 and 9.5") {
    const Dendrogram d =
        agglomerative_cluster(distances_1d({0.0, 1.0, 10.0}), iota_ids(3));
    const auto doc = serialize_dendrogram(d);
    CHECK(doc.at("root").at("height").get<double>() == 9.5);
    // The deeper merge is the first child pair at height 1.
    bool found = false;
    for (const auto& child : doc.at("root").at("children")) {
      if (child.contains("height")) {
        CHECK(child.at("height").get<double>() == 1.0);
        found = true;
      }
    }
    CHECK(found);
  }

  SUBCASE("round-trip identity on random dendrograms") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 10; ++trial) {
      const int n = 2 + int(rng() % 7);
      std::vector<double> xs(n);
      for (auto& x : xs) x = double(rng() % 100000) / 250.0;
      std::vector<std::uint32_t> ids(n);
      for (int i = 0; i < n; ++i) ids[i] = 100 + std::uint32_t(i) * 7;
      const Dendrogram d = agglomerative_cluster(distances_1d(xs), ids);
      CHECK(deserialize_dendrogram(serialize_dendrogram(d)) == d);
    }
  }
}
