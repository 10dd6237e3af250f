#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "crlm/radiomics.hpp"
#include "crlm/survmodel.hpp"
#include "crlm/survnet.hpp"
#include "crlm/survstats.hpp"
#include "crlm/survtrain.hpp"
#include "oracles.hpp"

using namespace crlm;
using namespace crlm::surv;

namespace {

PatientBag bag_of(std::vector<std::vector<double>> instances, double t,
                  int event, int largest = 0) {
  PatientBag b;
  b.patient_id = "p";
  b.instances = std::move(instances);
  b.time_months = t;
  b.event = event;
  b.largest_index = largest;
  return b;
}

std::vector<PatientBag> small_batch(int n_bags, int dim, uint64_t seed) {
  Rng rng(seed);
  std::vector<PatientBag> bags;
  for (int i = 0; i < n_bags; ++i) {
    PatientBag b;
    b.patient_id = oracles::patient_name(i);
    const int tumors = rng.uniform_int(1, 3);
    for (int t = 0; t < tumors; ++t) {
      std::vector<double> x(static_cast<size_t>(dim));
      for (auto& v : x) v = rng.normal();
      b.instances.push_back(std::move(x));
    }
    b.time_months = 1.0 + 40.0 * rng.uniform();
    b.event = rng.uniform() < 0.6 ? 1 : 0;
    b.largest_index = rng.uniform_int(0, tumors - 1);
    bags.push_back(std::move(b));
  }
  bags[0].event = 1;  // at least one event
  return bags;
}

}  // namespace

TEST_CASE("pooling basics") {
  const std::vector<double> one{1.0};
  for (auto mode : {PoolMode::Mean, PoolMode::Largest, PoolMode::Max,
                    PoolMode::Lse})
    CHECK(pool(one, mode, 0) == 1.0);

  const std::vector<double> zz{0.0, 0.0};
  CHECK(pool(zz, PoolMode::Lse) == Catch::Approx(std::log(2.0)).epsilon(1e-15));

  const std::vector<double> big{1000.0, 1000.0};
  CHECK(pool(big, PoolMode::Lse) ==
        Catch::Approx(1000.0 + std::log(2.0)).epsilon(1e-15));

  const std::vector<double> mixed{1.0, 3.0, 2.0};
  CHECK(pool(mixed, PoolMode::Mean) == Catch::Approx(2.0));
  CHECK(pool(mixed, PoolMode::Max) == 3.0);
  CHECK(pool(mixed, PoolMode::Largest, 2) == 2.0);
  CHECK_THROWS_AS(pool(mixed, PoolMode::Largest, -1), DataError);
  CHECK_THROWS_AS(pool(std::vector<double>{}, PoolMode::Mean), DataError);
}

TEST_CASE("lse bound property") {
  Rng rng(41);
  for (int rep = 0; rep < 2000; ++rep) {
    const int n = rng.uniform_int(2, 8);
    std::vector<double> h(static_cast<size_t>(n));
    for (auto& v : h) v = rng.uniform(-12.0, 12.0);
    const double mx = *std::max_element(h.begin(), h.end());
    const double lse = pool(h, PoolMode::Lse);
    CHECK(lse > mx);
    CHECK(lse <= mx + std::log(static_cast<double>(n)) + 1e-12);
  }
  // right equality iff all equal
  const std::vector<double> eq{2.5, 2.5, 2.5};
  CHECK(pool(eq, PoolMode::Lse) ==
        Catch::Approx(2.5 + std::log(3.0)).epsilon(1e-15));
  const std::vector<double> ne{2.5, 2.5, 2.4999};
  CHECK(pool(ne, PoolMode::Lse) < 2.5 + std::log(3.0));
  // singleton is exact
  CHECK(pool(std::vector<double>{7.25}, PoolMode::Lse) == 7.25);
}

TEST_CASE("pool(max) equals pool(largest) when the largest tumor is riskiest") {
  Rng rng(43);
  for (int rep = 0; rep < 200; ++rep) {
    const int n = rng.uniform_int(1, 6);
    std::vector<double> h(static_cast<size_t>(n));
    for (auto& v : h) v = rng.normal();
    const int arg = static_cast<int>(
        std::max_element(h.begin(), h.end()) - h.begin());
    CHECK(pool(h, PoolMode::Max) == pool(h, PoolMode::Largest, arg));
  }
}

TEST_CASE("loss_mse") {
  const std::vector<std::vector<double>> x{{1.0, 2.0}, {0.0, 0.0}};
  CHECK(loss_mse(x, x) == 0.0);
  CHECK(loss_mse({{0.0}}, {{2.0}}) == Catch::Approx(4.0));
  // per-instance squared errors 1 and 3 -> mean 2
  CHECK(loss_mse({{1.0, 0.0, 0.0}, {1.0, 1.0, 1.0}},
                 {{0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}}) == Catch::Approx(2.0));
  CHECK_THROWS_AS(loss_mse(x, {{1.0}}), DataError);
}

TEST_CASE("loss_cox hand values") {
  SECTION("single event patient scores zero") {
    CHECK(loss_cox(std::vector<double>{0.7}, std::vector<double>{3.0},
                   std::vector<int>{1}) == Catch::Approx(0.0).margin(1e-15));
  }
  SECTION("two events, equal hazards") {
    CHECK(loss_cox(std::vector<double>{0.0, 0.0}, std::vector<double>{1.0, 2.0},
                   std::vector<int>{1, 1}) ==
          Catch::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SECTION("shift invariance") {
    Rng rng(47);
    std::vector<double> eta{0.3, -1.2, 0.8, 2.0, -0.5};
    std::vector<double> t{5, 3, 8, 1, 9};
    std::vector<int> d{1, 0, 1, 1, 0};
    const double base = loss_cox(eta, t, d);
    for (double c : {-10.0, -1.0, 0.5, 10.0}) {
      auto shifted = eta;
      for (auto& e : shifted) e += c;
      CHECK(std::fabs(loss_cox(shifted, t, d) - base) < 1e-10);
    }
  }
  SECTION("raising the earliest event's hazard lowers the loss") {
    std::vector<double> eta{0.0, 0.0, 0.0, 0.0};
    const std::vector<double> t{1, 2, 3, 4};
    const std::vector<int> d{1, 1, 0, 1};
    const double before = loss_cox(eta, t, d);
    eta[0] += 0.3;
    CHECK(loss_cox(eta, t, d) < before);
  }
  SECTION("no events is an error") {
    CHECK_THROWS_AS(loss_cox(std::vector<double>{1.0},
                             std::vector<double>{1.0}, std::vector<int>{0}),
                    DataError);
  }
  SECTION("breslow ties: tied events share the risk set") {
    // three patients, two tied events at t=1 plus one at t=2, all eta 0:
    // loss = -[ (0 - log 3) + (0 - log 3) + (0 - log 1) ] = 2 log 3
    CHECK(loss_cox(std::vector<double>{0, 0, 0},
                   std::vector<double>{1, 1, 2}, std::vector<int>{1, 1, 1}) ==
          Catch::Approx(2.0 * std::log(3.0)).epsilon(1e-12));
  }
}

TEST_CASE("zero-weight network pools the bias") {
  NetConfig nc;
  nc.input_dim = 4;
  nc.encoder = {8, 4};
  nc.regressor = {3};
  nc.dropout = 0.0;
  auto net = Network::init(nc, 1);
  std::fill(net.params().begin(), net.params().end(), 0.0);
  // set the regressor output bias
  const auto& layers = net.layers();
  const auto& out_layer = layers.back();
  net.params()[out_layer.b_off] = 0.75;

  PatientBag bag = bag_of({{1, 2, 3, 4}, {0, 0, 0, 0}, {4, 3, 2, 1}}, 5.0, 1);
  const auto fwd = forward_bag(net, bag, PoolMode::Lse);
  for (double h : fwd.tumor_hazards) CHECK(h == Catch::Approx(0.75));
  CHECK(fwd.patient_hazard ==
        Catch::Approx(0.75 + std::log(3.0)).epsilon(1e-12));
  CHECK(forward_bag(net, bag, PoolMode::Mean).patient_hazard ==
        Catch::Approx(0.75));
}

TEST_CASE("single-instance bag pools identically under every mode") {
  NetConfig nc;
  nc.input_dim = 3;
  nc.encoder = {6, 4};
  nc.regressor = {2};
  const auto net = Network::init(nc, 7);
  const PatientBag bag = bag_of({{0.5, -1.0, 2.0}}, 3.0, 1, 0);
  const double mean_h = forward_bag(net, bag, PoolMode::Mean).patient_hazard;
  for (auto mode : {PoolMode::Largest, PoolMode::Max, PoolMode::Lse})
    CHECK(forward_bag(net, bag, mode).patient_hazard == mean_h);
}

TEST_CASE("gradient check passes for every alpha and pooling mode") {
  const auto bags = small_batch(6, 5, 51);
  NetConfig nc;
  nc.input_dim = 5;
  nc.encoder = {8, 6, 4};
  nc.regressor = {3};
  const auto net = Network::init(nc, 11);
  for (double alpha : {0.0, 0.5, 1.0}) {
    for (auto mode : {PoolMode::Mean, PoolMode::Largest, PoolMode::Max,
                      PoolMode::Lse}) {
      const auto res =
          gradient_check(net, bags, mode, alpha, 1e-5, 60, 2027);
      INFO("alpha=" << alpha << " mode=" << pool_name(mode));
      CHECK(res.max_rel_error < 1e-4);
      CHECK(res.params_checked == 60);
    }
  }
}

TEST_CASE("gradient check with an empty subset reports zero error") {
  const auto bags = small_batch(3, 4, 53);
  NetConfig nc;
  nc.input_dim = 4;
  const auto net = Network::init(nc, 3);
  const auto res = gradient_check(net, bags, PoolMode::Lse, 0.5, 1e-5, 0, 1);
  CHECK(res.max_rel_error == 0.0);
  CHECK(res.params_checked == 0);
}

TEST_CASE("training is deterministic and E=0 is a no-op") {
  const auto bags = small_batch(10, 4, 57);
  TrainConfig tc;
  tc.encoder = {8, 4};
  tc.regressor = {3};
  tc.epochs = 0;
  tc.seed = 99;
  const auto net0a = train(bags, 4, tc);
  const auto net0b = train(bags, 4, tc);
  NetConfig nc;
  nc.input_dim = 4;
  nc.encoder = tc.encoder;
  nc.regressor = tc.regressor;
  nc.dropout = tc.dropout;
  const auto fresh = Network::init(nc, tc.seed);
  CHECK(net0a.params() == fresh.params());  // unchanged by E=0

  tc.epochs = 25;
  TrainLog log_a, log_b;
  const auto a = train(bags, 4, tc, &log_a);
  const auto b = train(bags, 4, tc, &log_b);
  CHECK(a.params() == b.params());  // bit-identical trajectories
  CHECK(log_a.epoch_loss == log_b.epoch_loss);
  CHECK(log_a.epoch_alpha.front() == Catch::Approx(1.0 / 25.0));
  CHECK(log_a.epoch_alpha.back() == 1.0);

  TrainConfig other = tc;
  other.seed = 100;
  const auto c = train(bags, 4, other);
  CHECK(a.params() != c.params());
}

TEST_CASE("training without uncensored patients is an error") {
  auto bags = small_batch(5, 3, 61);
  for (auto& b : bags) b.event = 0;
  TrainConfig tc;
  tc.encoder = {4};
  tc.epochs = 2;
  CHECK_THROWS_AS(train(bags, 3, tc), DataError);
}

TEST_CASE("planted linear hazard is learned (3-fold by hand)") {
  const auto cohort = oracles::planted_cohort(120, 4, 2.0, 0.35, 71, 2);

  // normalize features over the whole cohort, then 3-fold CV by hand
  radiomics::FeatureMatrix m;
  m.columns = {"f0", "f1", "f2", "f3"};
  for (const auto& r : cohort.records) m.rows.push_back(r.features);
  const auto st = radiomics::fit_normalizer(m);
  const auto norm = radiomics::apply_normalizer(m, st);
  auto records = cohort.records;
  for (size_t i = 0; i < records.size(); ++i)
    records[i].features = norm.rows[i];
  auto bags = oracles::cohort_bags({records, cohort.survival, 4});

  TrainConfig tc;
  tc.encoder = {16, 8};
  tc.regressor = {4};
  tc.epochs = 300;
  tc.learning_rate = 5e-3;
  tc.pool = PoolMode::Lse;
  tc.seed = 4242;

  std::vector<double> t_all, h_all;
  std::vector<int> e_all;
  for (int fold = 0; fold < 3; ++fold) {
    std::vector<PatientBag> train_bags, test_bags;
    for (size_t i = 0; i < bags.size(); ++i)
      ((i % 3 == static_cast<size_t>(fold)) ? test_bags : train_bags)
          .push_back(bags[i]);
    const auto net = train(train_bags, 4, tc);
    for (const auto& bag : test_bags) {
      t_all.push_back(bag.time_months);
      e_all.push_back(bag.event);
      h_all.push_back(forward_bag(net, bag, tc.pool).patient_hazard);
    }
  }
  const double ci = stats::c_index(t_all, e_all, h_all);
  CHECK(ci >= 0.8);
}

TEST_CASE("normalization absorbs a global feature rescaling") {
  const auto cohort = oracles::planted_cohort(40, 3, 1.5, 0.3, 73, 2);
  radiomics::FeatureMatrix m;
  m.columns = {"a", "b", "c"};
  for (const auto& r : cohort.records) m.rows.push_back(r.features);
  radiomics::FeatureMatrix doubled = m;
  for (auto& row : doubled.rows)
    for (auto& v : row) v *= 2.0;

  const auto na = radiomics::apply_normalizer(m, radiomics::fit_normalizer(m));
  const auto nb =
      radiomics::apply_normalizer(doubled, radiomics::fit_normalizer(doubled));
  for (size_t i = 0; i < na.rows.size(); ++i)
    for (size_t j = 0; j < 3; ++j)
      CHECK(na.rows[i][j] == Catch::Approx(nb.rows[i][j]).margin(1e-10));

  // identical normalized inputs give identical hazards
  auto make_bags = [&](const radiomics::FeatureMatrix& nm) {
    auto records = cohort.records;
    for (size_t i = 0; i < records.size(); ++i) records[i].features = nm.rows[i];
    return oracles::cohort_bags({records, cohort.survival, 3});
  };
  TrainConfig tc;
  tc.encoder = {8, 4};
  tc.regressor = {3};
  tc.epochs = 30;
  tc.seed = 7;
  const auto bags_a = make_bags(na);
  const auto bags_b = make_bags(nb);
  const auto net_a = train(bags_a, 3, tc);
  const auto net_b = train(bags_b, 3, tc);
  for (size_t i = 0; i < bags_a.size(); ++i) {
    const double ha = forward_bag(net_a, bags_a[i], tc.pool).patient_hazard;
    const double hb = forward_bag(net_b, bags_b[i], tc.pool).patient_hazard;
    CHECK(ha == Catch::Approx(hb).margin(1e-8));
  }
}

TEST_CASE("late fusion") {
  std::map<std::string, double> pre{{"p1", 1.0}, {"p2", 4.0}};
  std::map<std::string, double> post{{"p1", 3.0}, {"p3", 5.0}};
  const auto fused = late_fusion(pre, post);
  CHECK(fused.at("p1") == Catch::Approx(2.0));
  CHECK(fused.at("p2") == 4.0);  // single-phase fallback
  CHECK(fused.at("p3") == 5.0);
  const auto same = late_fusion(pre, pre);
  CHECK(same.at("p1") == 1.0);
  CHECK(same.at("p2") == 4.0);
  CHECK_THROWS_AS(late_fusion({}, {}), DataError);
}

TEST_CASE("model json round trip preserves behavior bit-exactly") {
  namespace fs = std::filesystem;
  const auto bags = small_batch(8, 5, 83);
  TrainConfig tc;
  tc.encoder = {8, 4};
  tc.regressor = {3};
  tc.epochs = 15;
  tc.seed = 5;
  Model model;
  model.net = train(bags, 5, tc);
  model.pool = PoolMode::Lse;
  model.seed = tc.seed;
  model.normalizer.columns = {"a", "b", "c", "d", "e"};
  model.normalizer.col_min = {0, 0, 0, 0, 0};
  model.normalizer.med_shift = {1, 1, 1, 1, 1};
  model.normalizer.mu = {0, 0, 0, 0, 0};
  model.normalizer.sigma = {1, 1, 1, 1, 1};

  const auto path = fs::temp_directory_path() / "crlm_model_test.json";
  save_model(path.string(), model);
  const auto back = load_model(path.string());
  CHECK(back.net.params() == model.net.params());
  CHECK(back.pool == model.pool);
  CHECK(back.normalizer.columns == model.normalizer.columns);
  const auto h0 = forward_bag(model.net, bags[0], model.pool).patient_hazard;
  const auto h1 = forward_bag(back.net, bags[0], back.pool).patient_hazard;
  CHECK(h0 == h1);
  fs::remove(path);
}
