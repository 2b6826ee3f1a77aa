#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <set>

#include "oracles.hpp"
#include "pktdt/trajectory.hpp"

using namespace pktdt;

namespace {

std::vector<EncodedFlow> labeled_flows(std::size_t benign, std::size_t malicious, std::size_t packets = 3) {
  std::mt19937_64 rng(1);
  std::vector<EncodedFlow> out;
  for (std::size_t i = 0; i < benign + malicious; ++i) {
    out.push_back(oracle::random_flow(rng, packets, i < benign ? Label::Benign : Label::Malicious, 2,
                                      "f" + std::to_string(i)));
  }
  return out;
}

std::multiset<std::string> ids(const std::vector<EncodedFlow>& flows) {
  std::multiset<std::string> s;
  for (const auto& f : flows) s.insert(f.flow_id);
  return s;
}

}  // namespace

TEST_CASE("reward examples") {
  RewardConfig cfg;
  CHECK(reward(kWait, Label::Malicious, cfg) == -0.05);
  CHECK(reward(kMalicious, Label::Malicious, cfg) == 1.0);
  CHECK(reward(kBenign, Label::Malicious, cfg) == -1.0);
  CHECK_THROWS_AS(reward(3, Label::Benign, cfg), InvalidDecision);
  CHECK_THROWS_AS(reward(-1, Label::Benign, cfg), InvalidDecision);
}

TEST_CASE("reward matches the five-case table for random constants") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    RewardConfig c{u(rng), u(rng), u(rng), u(rng), u(rng)};
    for (int d = 0; d < 3; ++d) {
      for (int y = 0; y < 2; ++y) {
        CHECK(reward(d, static_cast<Label>(y), c) == oracle::reward_table(d, y, c.c_tp, c.c_tn, c.c_fp, c.c_fn, c.c_wait));
      }
    }
  }
}

TEST_CASE("reward config validation") {
  RewardConfig ok;
  CHECK_NOTHROW(ok.validate());
  RewardConfig bad;
  bad.c_fn = 2.0;
  CHECK_THROWS_AS(bad.validate(), DataError);
  bad = RewardConfig{};
  bad.c_wait = std::nan("");
  CHECK_THROWS_AS(bad.validate(), DataError);
}

TEST_CASE("compute_rtg examples and suffix-sum oracle") {
  const auto a = compute_rtg(std::vector<double>{-0.1, -0.1, 1.0});
  REQUIRE(a.size() == 3);
  CHECK(a[0] == doctest::Approx(0.8));
  CHECK(a[1] == doctest::Approx(0.9));
  CHECK(a[2] == 1.0);
  CHECK(compute_rtg(std::vector<double>{5.0}) == std::vector<double>{5.0});

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const auto r = oracle::random_vector(rng, 20, -2.0, 2.0);
    const auto rtg = compute_rtg(r);
    CHECK(rtg == oracle::suffix_sums(r));
    for (std::size_t i = 0; i + 1 < r.size(); ++i) CHECK(rtg[i] == rtg[i + 1] + r[i]);
    CHECK(rtg.back() == r.back());
  }
}

TEST_CASE("observation layout") {
  PacketRecord p;
  p.src_ip = Ipv4::parse("255.0.51.102");
  p.dst_ip = Ipv4::parse("1.2.3.4");
  p.src_port = 65535;
  p.dst_port = 0;
  p.protocol = Protocol::UDP;
  const std::vector<double> z{0.5, -1.0};
  const auto o = build_observation(z, p);
  REQUIRE(o.size() == z.size() + kHeaderFeatures);
  CHECK(o[0] == 0.5);
  CHECK(o[1] == -1.0);
  CHECK(o[2] == 1.0);
  CHECK(o[3] == 0.0);
  CHECK(o[4] == 0.2);
  CHECK(o[5] == 0.4);
  CHECK(o[6] == 1.0 / 255.0);
  CHECK(o[9] == 4.0 / 255.0);
  CHECK(o[10] == 1.0);
  CHECK(o[11] == 0.0);
  CHECK(o[12] == 0.0);
  CHECK(o[13] == 1.0);
  CHECK(o[14] == 0.0);
}

TEST_CASE("encode_flow uses time since the first packet") {
  Flow f;
  f.flow_id = "x";
  f.label = Label::Benign;
  for (double ts : {100.0, 100.5, 103.0}) {
    PacketRecord p;
    p.timestamp = ts;
    f.packets.push_back(p);
  }
  const std::vector<std::vector<double>> z(3, std::vector<double>{1.0});
  const auto e = encode_flow(f, z);
  CHECK(e.packets[0].t == 0.0);
  CHECK(e.packets[1].t == 0.5);
  CHECK(e.packets[2].t == 3.0);
  CHECK(e.duration() == 3.0);
  CHECK_THROWS_AS(encode_flow(f, std::vector<std::vector<double>>(2)), DimensionMismatch);
}

TEST_CASE("trajectory invariants hold for every policy") {
  std::mt19937_64 rng(5);
  RewardConfig cfg;
  for (PolicyTag tag : {PolicyTag::Expert, PolicyTag::Medium, PolicyTag::Random}) {
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
      const std::size_t len = 1 + seed % 12;
      const auto flow = oracle::random_flow(rng, len, seed % 2 ? Label::Malicious : Label::Benign);
      const auto tr = simulate_policy(flow, tag, cfg, seed);
      REQUIRE(!tr.steps.empty());
      REQUIRE(tr.steps.size() <= len);
      CHECK(tr.steps.back().decision != kWait);
      double fold = 0.0;
      for (const auto& s : tr.steps) fold += s.reward;
      CHECK(tr.episode_return() == doctest::Approx(fold).epsilon(1e-12));
      for (std::size_t i = 0; i + 1 < tr.steps.size(); ++i) {
        CHECK(tr.steps[i].decision == kWait);
        CHECK(tr.steps[i].rtg == tr.steps[i + 1].rtg + tr.steps[i].reward);
        CHECK(std::abs(tr.steps[i].wait - (tr.steps[i + 1].t - tr.steps[i].t)) < 1e-9);
      }
      CHECK(tr.steps.back().rtg == tr.steps.back().reward);
      if (tag == PolicyTag::Expert) CHECK(tr.steps.size() <= (len + 1) / 2);
    }
  }
}

TEST_CASE("expert on a 10-packet flow stops by packet 5") {
  std::mt19937_64 rng(9);
  const auto flow = oracle::random_flow(rng, 10, Label::Benign);
  const auto tr = simulate_policy(flow, PolicyTag::Expert, RewardConfig{}, 42);
  CHECK(tr.steps.size() <= 5);
  for (std::size_t i = 0; i + 1 < tr.steps.size(); ++i) CHECK(tr.steps[i].decision == kWait);
}

TEST_CASE("expert accuracy and random first-step frequency over 10,000 flows") {
  std::mt19937_64 rng(13);
  std::vector<EncodedFlow> flows;
  for (int i = 0; i < 10000; ++i) flows.push_back(oracle::random_flow(rng, 3 + i % 10, i % 2 ? Label::Malicious : Label::Benign, 1));
  const auto expert = simulate_dataset(flows, PolicyTag::Expert, RewardConfig{}, 100);
  int correct = 0;
  for (std::size_t i = 0; i < flows.size(); ++i) {
    const int truth = flows[i].label == Label::Malicious ? 1 : 0;
    correct += expert.trajectories[i].steps.back().decision == truth;
  }
  const double acc = correct / 10000.0;
  CHECK(acc >= 0.88);
  CHECK(acc <= 0.92);

  const auto random = simulate_dataset(flows, PolicyTag::Random, RewardConfig{}, 200);
  int first = 0;
  for (const auto& t : random.trajectories) first += t.steps.size() == 1;
  const double freq = first / 10000.0;
  CHECK(freq >= 0.64);
  CHECK(freq <= 0.69);
}

TEST_CASE("random policy never waits at the last packet") {
  std::mt19937_64 rng(21);
  const auto flow = oracle::random_flow(rng, 1, Label::Benign);
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto t = simulate_policy(flow, PolicyTag::Random, RewardConfig{}, s);
    REQUIRE(t.steps.size() == 1);
    CHECK(t.steps[0].decision != kWait);
  }
}

TEST_CASE("unlabeled flows cannot be simulated") {
  std::mt19937_64 rng(1);
  const auto flow = oracle::random_flow(rng, 3, Label::Unlabeled);
  CHECK_THROWS_AS(simulate_policy(flow, PolicyTag::Expert, RewardConfig{}, 0), DataError);
}

TEST_CASE("oversampling") {
  auto out = balance_oversample(labeled_flows(10, 2), 3);
  std::size_t mal = 0;
  for (const auto& f : out) mal += f.label == Label::Malicious;
  CHECK(mal >= 9);

  const auto balanced = labeled_flows(5, 5);
  CHECK(ids(balance_oversample(balanced, 3)) == ids(balanced));
  CHECK(balance_oversample(balanced, 3) == balance_oversample(balanced, 3));
  CHECK_THROWS_AS(balance_oversample(labeled_flows(4, 0), 1), MissingClass);
  CHECK_THROWS_AS(balance_oversample(labeled_flows(0, 4), 1), MissingClass);
}

TEST_CASE("stratified split") {
  const auto flows = labeled_flows(60, 40);
  auto [train, test] = split_dataset(flows, 0.2, 7);
  CHECK(train.size() == 80);
  CHECK(test.size() == 20);
  std::size_t test_mal = 0;
  for (const auto& f : test) test_mal += f.label == Label::Malicious;
  CHECK(test_mal >= 7);
  CHECK(test_mal <= 9);
  auto all = ids(train);
  for (const auto& id : ids(test)) {
    CHECK(all.count(id) == 0);
    all.insert(id);
  }
  CHECK(all == ids(flows));

  auto again = split_dataset(flows, 0.2, 7);
  CHECK(again.first == train);
  CHECK(again.second == test);
  auto none = split_dataset(flows, 0.0, 7);
  CHECK(none.first.size() == 100);
  CHECK(none.second.empty());
}

TEST_CASE("window sampling") {
  std::mt19937_64 rng(3);
  const auto f3 = oracle::random_flow(rng, 3, Label::Benign);
  std::vector<Trajectory> one{make_trajectory(f3, std::vector<int>{2, 2, 0}, RewardConfig{})};
  for (int i = 0; i < 50; ++i) {
    const Window w = sample_window(one, 5, rng);
    CHECK(w.begin == 0);
    CHECK(w.end >= 1);
    const Window w1 = sample_window(one, 1, rng);
    CHECK(w1.length() == 1);
  }
  bool saw_full = false;
  for (int i = 0; i < 100; ++i) saw_full = saw_full || sample_window(one, 5, rng).length() == 3;
  CHECK(saw_full);
  CHECK_THROWS_AS(sample_window(one, 0, rng), DataError);
}

TEST_CASE("trajectory draw is proportional to length") {
  std::mt19937_64 rng(17);
  const auto f9 = oracle::random_flow(rng, 9, Label::Benign);
  const auto f1 = oracle::random_flow(rng, 1, Label::Benign);
  std::vector<Trajectory> trajs{make_trajectory(f9, std::vector<int>{2, 2, 2, 2, 2, 2, 2, 2, 0}, RewardConfig{}),
                                make_trajectory(f1, std::vector<int>{1}, RewardConfig{})};
  int first = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) first += sample_window(trajs, 4, rng).trajectory == 0;
  CHECK(std::abs(first / static_cast<double>(n) - 0.9) <= 0.01);

  const std::vector<double> weights{0.0, 1.0};
  for (int i = 0; i < 100; ++i) CHECK(sample_window(trajs, 4, rng, weights).trajectory == 1);
}

TEST_CASE("dataset JSONL round trip") {
  std::mt19937_64 rng(8);
  std::vector<EncodedFlow> flows;
  for (int i = 0; i < 20; ++i) flows.push_back(oracle::random_flow(rng, 1 + i % 6, i % 3 ? Label::Benign : Label::Malicious, 3, "id" + std::to_string(i)));
  RewardConfig cfg{0.9, 1.1, -0.7, -1.3, -0.02};
  const auto ds = simulate_dataset(flows, PolicyTag::Medium, cfg, 4);
  const auto dir = std::filesystem::temp_directory_path() / "pktdt_test_traj";
  std::filesystem::create_directories(dir);
  write_dataset(dir / "ds.jsonl", ds);
  const auto back = read_dataset(dir / "ds.jsonl");
  CHECK(back.trajectories == ds.trajectories);
  CHECK(back.policy == PolicyTag::Medium);
  CHECK(back.reward == cfg);
  CHECK(back.split == Split::Train);
  CHECK(back.obs_dim() == 3 + 0);

  write_encoded_flows(dir / "flows.jsonl", flows);
  CHECK(read_encoded_flows(dir / "flows.jsonl") == flows);
}

TEST_CASE("max_return picks the best trajectory") {
  OfflineDataset ds;
  Trajectory a, b;
  a.steps.push_back(Step{});
  a.steps[0].rtg = 0.8;
  b.steps.push_back(Step{});
  b.steps[0].rtg = 0.5;
  ds.trajectories = {a, b};
  CHECK(ds.max_return() == 0.8);
  CHECK_THROWS_AS(OfflineDataset{}.max_return(), DataError);
}
