#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dial2vec/selfguided.hpp"
#include "testutil.hpp"

using namespace dial2vec;

namespace {

TokenizedDialogue tok_from_roles(const std::vector<int>& role_ids,
                                 const std::vector<int>& turn_ids) {
  TokenizedDialogue tok;
  tok.dialogue_id = "fixture";
  tok.role_ids = role_ids;
  tok.turn_ids = turn_ids;
  tok.token_ids.assign(role_ids.size(), 2);
  tok.position_ids.resize(role_ids.size());
  for (std::size_t i = 0; i < role_ids.size(); ++i) {
    tok.position_ids[i] = static_cast<int>(i);
  }
  return tok;
}

// the worked 4x2 fixture: P1 owns rows 0 and 2, P2 owns rows 1 and 3
ag::Matrix fixture_self_p1() {
  ag::Matrix m = ag::Matrix::Zero(4, 2);
  m(0, 0) = 1.0;
  m(2, 1) = 1.0;
  return m;
}

ag::Matrix fixture_self_p2() {
  ag::Matrix m = ag::Matrix::Zero(4, 2);
  m(1, 0) = 1.0;
  m(1, 1) = 1.0;
  m(3, 0) = 2.0;
  return m;
}

}  // namespace

TEST_CASE("build_masks follows role ids and partitions positions") {
  const MaskPair masks = build_masks(tok_from_roles({1, 1, 2}, {0, 0, 1}));
  CHECK(masks.p1(0) == 1.0);
  CHECK(masks.p1(1) == 1.0);
  CHECK(masks.p1(2) == 0.0);
  CHECK(masks.p2(0) == 0.0);
  CHECK(masks.p2(2) == 1.0);
  CHECK((masks.p1 + masks.p2 - Eigen::VectorXd::Ones(3)).norm() == 0.0);
}

TEST_CASE("masks partition any alternating fixture") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const int turns = 2 + static_cast<int>(rng.next_below(6));
    std::vector<int> role_ids, turn_ids;
    for (int t = 0; t < turns; ++t) {
      const int tokens = 1 + static_cast<int>(rng.next_below(4));
      for (int i = 0; i < tokens; ++i) {
        turn_ids.push_back(t);
        role_ids.push_back(t % 2 == 0 ? 1 : 2);
      }
    }
    const MaskPair masks = build_masks(tok_from_roles(role_ids, turn_ids));
    const auto n = static_cast<Eigen::Index>(role_ids.size());
    CHECK((masks.p1 + masks.p2 - Eigen::VectorXd::Ones(n)).norm() == 0.0);
    CHECK(masks.p1.sum() >= 1.0);
    CHECK(masks.p2.sum() >= 1.0);
    // popcount equals the hand count of role-1 tokens
    long p1_tokens = 0;
    for (const int r : role_ids) p1_tokens += r == 1 ? 1 : 0;
    CHECK(static_cast<long>(masks.p1.sum()) == p1_tokens);
  }
}

TEST_CASE("build_masks rejects single-role inputs") {
  CHECK_THROWS_AS(build_masks(tok_from_roles({1, 1}, {0, 0})),
                  std::invalid_argument);
}

TEST_CASE("self_representation zeroes exactly the masked rows") {
  Rng rng(2);
  const ag::Matrix e = testutil::random_matrix(4, 2, rng);

  Eigen::VectorXd all_ones = Eigen::VectorXd::Ones(4);
  CHECK((self_representation(e, all_ones) - e).norm() == 0.0);

  Eigen::VectorXd all_zero = Eigen::VectorXd::Zero(4);
  CHECK(self_representation(e, all_zero).norm() == 0.0);

  Eigen::VectorXd mask(4);
  mask << 1.0, 0.0, 1.0, 0.0;
  const ag::Matrix masked = self_representation(e, mask);
  CHECK((masked.row(0) - e.row(0)).norm() == 0.0);
  CHECK(masked.row(1).norm() == 0.0);
  CHECK((masked.row(2) - e.row(2)).norm() == 0.0);
  CHECK(masked.row(3).norm() == 0.0);
}

TEST_CASE("correlation matrix reproduces the worked fixture") {
  const ag::Matrix c_p1 = correlation_matrix(fixture_self_p2(), fixture_self_p1());
  REQUIRE(c_p1.rows() == 4);
  REQUIRE(c_p1.cols() == 4);
  CHECK(c_p1.row(0).norm() == 0.0);
  CHECK(c_p1.row(2).norm() == 0.0);
  ag::Matrix row1_expected(1, 4);
  row1_expected << 1.0, 0.0, 1.0, 0.0;
  CHECK((c_p1.row(1) - row1_expected.row(0)).norm() == 0.0);
  ag::Matrix row3_expected(1, 4);
  row3_expected << 2.0, 0.0, 0.0, 0.0;
  CHECK((c_p1.row(3) - row3_expected.row(0)).norm() == 0.0);
}

TEST_CASE("correlation matrices of the two roles are mutual transposes") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const ag::Matrix e = testutil::random_matrix(6, 3, rng);
    Eigen::VectorXd m1(6), m2(6);
    for (int i = 0; i < 6; ++i) {
      m1(i) = i % 2 == 0 ? 1.0 : 0.0;
      m2(i) = 1.0 - m1(i);
    }
    const ag::Matrix e1 = self_representation(e, m1);
    const ag::Matrix e2 = self_representation(e, m2);
    const ag::Matrix c1 = correlation_matrix(e2, e1);
    const ag::Matrix c2 = correlation_matrix(e1, e2);
    CHECK((c1 - c2.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("zero operand annihilates the correlation matrix") {
  const ag::Matrix zero = ag::Matrix::Zero(4, 2);
  CHECK(correlation_matrix(zero, fixture_self_p1()).norm() == 0.0);
  CHECK(correlation_matrix(fixture_self_p2(), zero).norm() == 0.0);
}

TEST_CASE("window mask zeroes entries beyond the turn distance") {
  const std::vector<int> turn_ids{0, 1, 1, 2, 3, 3};

  SUBCASE("wide window changes nothing") {
    Rng rng(4);
    const ag::Matrix c = testutil::random_matrix(6, 6, rng);
    CHECK((apply_window_mask(c, turn_ids, 10) - c).norm() == 0.0);
  }

  SUBCASE("window one matches the brute-force grid") {
    Rng rng(5);
    const ag::Matrix c = testutil::random_matrix(6, 6, rng);
    const ag::Matrix masked = apply_window_mask(c, turn_ids, 1);
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j < 6; ++j) {
        if (std::abs(turn_ids[i] - turn_ids[j]) > 1) {
          CHECK(masked(i, j) == 0.0);
        } else {
          CHECK(masked(i, j) == c(i, j));
        }
      }
    }
  }
}

TEST_CASE("window zero with strict alternation kills the cross term") {
  // under alternation, same-turn pairs share a role, so one side is zero
  Rng rng(6);
  const std::vector<int> role_ids{1, 1, 2, 1, 2, 2};
  const std::vector<int> turn_ids{0, 0, 1, 2, 3, 3};
  const ag::Matrix e = testutil::random_matrix(6, 3, rng);
  const MaskPair masks = build_masks(tok_from_roles(role_ids, turn_ids));
  const ag::Matrix e1 = self_representation(e, masks.p1);
  const ag::Matrix e2 = self_representation(e, masks.p2);
  const ag::Matrix c1 = apply_window_mask(correlation_matrix(e2, e1), turn_ids, 0);
  CHECK(c1.norm() == 0.0);
  const ag::Matrix cross = cross_representation(c1, e1);
  CHECK(cross.norm() == 0.0);
}

TEST_CASE("cross representation reproduces the worked fixture") {
  const ag::Matrix c_p1 = correlation_matrix(fixture_self_p2(), fixture_self_p1());
  const ag::Matrix cross = cross_representation(c_p1, fixture_self_p1());
  CHECK(cross.row(0).norm() == 0.0);
  CHECK(cross.row(2).norm() == 0.0);
  CHECK(cross(1, 0) == doctest::Approx(1.0));
  CHECK(cross(1, 1) == doctest::Approx(1.0));
  CHECK(cross(3, 0) == doctest::Approx(2.0));
  CHECK(cross(3, 1) == doctest::Approx(0.0));
}

TEST_CASE("cross representation scales quadratically in the own side") {
  Rng rng(7);
  const ag::Matrix e = testutil::random_matrix(4, 3, rng);
  Eigen::VectorXd m1(4), m2(4);
  m1 << 1, 0, 1, 0;
  m2 << 0, 1, 0, 1;
  const ag::Matrix e1 = self_representation(e, m1);
  const ag::Matrix e2 = self_representation(e, m2);
  const ag::Matrix base =
      cross_representation(correlation_matrix(e2, e1), e1);
  const ag::Matrix scaled =
      cross_representation(correlation_matrix(e2, 2.0 * e1), 2.0 * e1);
  CHECK((scaled - 4.0 * base).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("cross representation support is complementary") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const int turns = 2 + static_cast<int>(rng.next_below(5));
    std::vector<int> role_ids, turn_ids;
    for (int t = 0; t < turns; ++t) {
      const int tokens = 1 + static_cast<int>(rng.next_below(3));
      for (int i = 0; i < tokens; ++i) {
        turn_ids.push_back(t);
        role_ids.push_back(t % 2 == 0 ? 1 : 2);
      }
    }
    const auto n = static_cast<Eigen::Index>(role_ids.size());
    const ag::Matrix e = testutil::random_matrix(n, 3, rng);
    const MaskPair masks = build_masks(tok_from_roles(role_ids, turn_ids));
    const ag::Matrix e1 = self_representation(e, masks.p1);
    const ag::Matrix e2 = self_representation(e, masks.p2);
    const ag::Matrix c1 = apply_window_mask(correlation_matrix(e2, e1), turn_ids, 2);
    const ag::Matrix cross1 = cross_representation(c1, e1);
    // rows of the P1 cross-representation live on P2 positions
    for (Eigen::Index i = 0; i < n; ++i) {
      if (masks.p1(i) == 1.0) {
        CHECK(cross1.row(i).norm() == 0.0);
      }
    }
  }
}

TEST_CASE("similarity is cosine of the pooled rows") {
  SUBCASE("identical pooled vectors give one") {
    ag::Matrix a(2, 3), b(2, 3);
    a << 1, 2, 3, 3, 2, 1;
    b << 2, 2, 2, 2, 2, 2;  // same mean
    CHECK(similarity(a, b) == doctest::Approx(1.0));
  }

  SUBCASE("orthogonal pooled vectors give zero") {
    ag::Matrix a(1, 2), b(1, 2);
    a << 1, 0;
    b << 0, 1;
    CHECK(similarity(a, b) == doctest::Approx(0.0));
  }

  SUBCASE("random fixture matches the direct formula") {
    Rng rng(9);
    const ag::Matrix a = testutil::random_matrix(4, 3, rng);
    const ag::Matrix b = testutil::random_matrix(4, 3, rng);
    Eigen::RowVectorXd pa = a.colwise().mean();
    Eigen::RowVectorXd pb = b.colwise().mean();
    const double expected = pa.dot(pb) / (pa.norm() * pb.norm());
    CHECK(similarity(a, b) == doctest::Approx(expected).epsilon(1e-12));
  }

  SUBCASE("zero pooled vector flags a diagnostic and returns zero") {
    ZeroPoolStats stats;
    const ag::Matrix zero = ag::Matrix::Zero(3, 2);
    ag::Matrix other(3, 2);
    other << 1, 2, 3, 4, 5, 6;
    CHECK(similarity(zero, other, &stats) == 0.0);
    CHECK(stats.events == 1);
  }

  SUBCASE("similarity stays within [-1, 1]") {
    Rng rng(10);
    for (int trial = 0; trial < 100; ++trial) {
      const ag::Matrix a = testutil::random_matrix(3, 4, rng, 5.0);
      const ag::Matrix b = testutil::random_matrix(3, 4, rng, 5.0);
      const double sim = similarity(a, b);
      CHECK(sim >= -1.0 - 1e-12);
      CHECK(sim <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("nt_xent matches the closed-form hand value") {
  // per role: positive 1.0, one negative 0.0, tau 0.2
  const double loss = nt_xent_loss({1.0, 1.0}, {{1.0, 0.0}, {1.0, 0.0}}, 0.2);
  const double per_role = std::log1p(std::exp(-5.0));
  CHECK(loss == doctest::Approx(2.0 * per_role).epsilon(1e-12));
  CHECK(loss == doctest::Approx(0.013430696978236136).epsilon(1e-9));
}

TEST_CASE("uniform similarities give R log N exactly") {
  const std::vector<double> sims{0.37, 0.37, 0.37, 0.37};
  const double loss = nt_xent_loss({0.37, 0.37}, {sims, sims}, 0.2);
  CHECK(loss == doctest::Approx(2.0 * std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("nt_xent is invariant to per-role constant shifts") {
  const std::vector<double> base{0.9, 0.1, -0.3, 0.5};
  std::vector<double> shifted = base;
  for (double& s : shifted) s += 0.42;
  const double a = nt_xent_loss({0.9, 0.9}, {base, base}, 0.2);
  const double b = nt_xent_loss({0.9 + 0.42, 0.9}, {shifted, base}, 0.2);
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("nt_xent rejects bad arguments") {
  CHECK_THROWS_AS(nt_xent_loss({1.0}, {{1.0, 0.0}}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(nt_xent_loss({1.0}, {{}}, 0.2), std::invalid_argument);
}

TEST_CASE("nt_xent survives extreme scaled similarities") {
  // tau small enough to overflow a naive exp
  const double loss = nt_xent_loss({1.0, 1.0}, {{1.0, -1.0}, {1.0, -1.0}}, 1e-3);
  CHECK(std::isfinite(loss));
  CHECK(loss >= 0.0);
}

// --------------------------------------------------------------------------
// session-level objective

namespace {

struct ToyModel {
  Corpus corpus;
  Vocab vocab;
  EncoderConfig config;
  EncoderParams params;
};

ToyModel make_toy_model() {
  ToyModel model;
  model.corpus.name = "toy";
  model.corpus.dialogues = {
      testutil::make_dialogue("a", {"red apple pie", "green tree", "blue sky", "tall tree"}),
      testutil::make_dialogue("b", {"fast car", "slow bike ride", "loud horn", "quiet street"}),
      testutil::make_dialogue("c", {"warm sun", "cold moon", "bright star light", "dark night"}),
  };
  model.vocab = build_vocab(model.corpus, 1);
  model.config.d_model = 8;
  model.config.layers = 2;
  model.config.heads = 2;
  model.config.ffn_width = 16;
  model.config.max_len = 64;
  model.config.vocab_size = model.vocab.size();
  model.config.turn_vocab = 8;
  model.params = init_params(model.config, 17);
  return model;
}

SampleSet make_samples(const ToyModel& model, int num_negatives, std::uint64_t seed) {
  const UtterancePool pool = build_utterance_pool(model.corpus);
  Rng rng(seed);
  return build_sample_set(model.corpus.dialogues[0], pool, num_negatives, rng);
}

}  // namespace

TEST_CASE("one gradient step strictly decreases the session loss") {
  const ToyModel model = make_toy_model();
  const SampleSet samples = make_samples(model, 2, 5);
  const SessionLossConfig loss_config{10, 0.2};

  ag::Tape tape;
  const ParamVars vars = bind_params(tape, model.params);
  const ag::Var loss =
      session_loss(tape, vars, model.config, model.vocab, samples, loss_config);
  const double before = loss.scalar();
  tape.backward(loss);

  GradientBuffer grads = zeros_like(model.config);
  accumulate_gradients(vars, model.config, grads, 1.0);

  std::vector<const ag::Matrix*> gs;
  grads.for_each_tensor([&](const std::string&, const ag::Matrix& g, int) {
    gs.push_back(&g);
  });

  // a small enough step along the negative gradient must decrease the loss
  bool decreased = false;
  for (double step_size = 1e-3; step_size > 1e-12 && !decreased; step_size *= 0.5) {
    EncoderParams stepped = model.params;
    std::size_t at = 0;
    stepped.for_each_tensor([&](const std::string&, ag::Matrix& m, int) {
      m -= step_size * (*gs[at++]);
    });
    const double after = session_loss_value(stepped, model.config, model.vocab,
                                            samples, loss_config);
    decreased = after < before;
  }
  CHECK(decreased);
}

TEST_CASE("negatives cloned from the positive give R log N") {
  const ToyModel model = make_toy_model();
  SampleSet degenerate;
  degenerate.positive = model.corpus.dialogues[0];
  degenerate.kept_role = Role::P1;
  degenerate.negatives = {model.corpus.dialogues[0], model.corpus.dialogues[0]};

  const double loss = session_loss_value(model.params, model.config, model.vocab,
                                         degenerate, SessionLossConfig{10, 0.2});
  CHECK(loss == doctest::Approx(2.0 * std::log(3.0)).epsilon(1e-9));
}

TEST_CASE("loss approaches R log N as tau grows") {
  const ToyModel model = make_toy_model();
  const SampleSet samples = make_samples(model, 3, 7);
  const double loss = session_loss_value(model.params, model.config, model.vocab,
                                         samples, SessionLossConfig{10, 1e6});
  CHECK(std::abs(loss - 2.0 * std::log(4.0)) < 1e-6);
}

TEST_CASE("window zero zeroes cross representations and counts events") {
  const ToyModel model = make_toy_model();
  const SampleSet samples = make_samples(model, 1, 9);
  ZeroPoolStats stats;
  const double loss = session_loss_value(model.params, model.config, model.vocab,
                                         samples, SessionLossConfig{0, 0.2}, &stats);
  // every similarity degenerates to 0, so the softmax is uniform
  CHECK(loss == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-9));
  // two sessions, two roles each
  CHECK(stats.events == 4);
}

TEST_CASE("tape pipeline values agree with the plain-matrix operations") {
  const ToyModel model = make_toy_model();
  const TokenizedDialogue tok = tokenize_dialogue(model.corpus.dialogues[1],
                                                  model.vocab, model.config.max_len);
  const MaskPair masks = build_masks(tok);
  const ag::Matrix encoded = encode_dialogue(tok, model.params, model.config);
  const int window = 1;

  // plain route
  const ag::Matrix e1 = self_representation(encoded, masks.p1);
  const ag::Matrix e2 = self_representation(encoded, masks.p2);
  const ag::Matrix c1 = apply_window_mask(correlation_matrix(e2, e1),
                                          tok.turn_ids, window);
  const ag::Matrix cross1 = cross_representation(c1, e1);
  ZeroPoolStats stats;
  const double plain_sim = similarity(e1, cross1, &stats);

  // tape route
  ag::Tape tape;
  const ParamVars vars = bind_params(tape, model.params);
  const ag::Var encoded_var = encode_dialogue(tape, tok, vars, model.config);
  const ag::Var sim = session_similarity(tape, encoded_var, masks, tok.turn_ids,
                                         window, Role::P1, &stats);
  CHECK(sim.scalar() == doctest::Approx(plain_sim).epsilon(1e-12));
}
