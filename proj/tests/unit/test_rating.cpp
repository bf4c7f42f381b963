#include <doctest.h>

#include <cmath>
#include <random>

#include "rat/error.hpp"
#include "rat/rating.hpp"

using namespace rat;

namespace {

// Moments of x ~ N(t, 1) restricted to [lo, hi], by composite Simpson.
struct Moments {
  double mean;
  double var;
};

Moments truncated_moments(double t, double lo, double hi) {
  lo = std::max(lo, t - 40.0);
  hi = std::min(hi, t + 40.0);
  const int n = 20000;
  const double h = (hi - lo) / n;
  double m0 = 0, m1 = 0, m2 = 0;
  for (int i = 0; i <= n; ++i) {
    const double x = lo + i * h;
    const double wgt = (i == 0 || i == n) ? 1 : (i % 2 ? 4 : 2);
    const double d = std::exp(-0.5 * (x - t) * (x - t));
    m0 += wgt * d;
    m1 += wgt * d * x;
    m2 += wgt * d * x * x;
  }
  const double mean = m1 / m0;
  return {mean, m2 / m0 - mean * mean};
}

double oracle_inv_cdf(double p) {
  double lo = -10, hi = 10;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

std::pair<Rating, Rating> oracle_update(Rating a, Rating b, Outcome o, const RatingParams& p) {
  if (o == Outcome::BWins) {
    auto [nb, na] = oracle_update(b, a, Outcome::AWins, p);
    return {na, nb};
  }
  const double va = a.sigma * a.sigma + p.tau * p.tau;
  const double vb = b.sigma * b.sigma + p.tau * p.tau;
  const double c = std::sqrt(2 * p.beta * p.beta + va + vb);
  const double eps = oracle_inv_cdf((p.draw_probability + 1) / 2) * std::sqrt(2.0) * p.beta / c;
  const double t = (a.mu - b.mu) / c;
  const auto m = o == Outcome::AWins ? truncated_moments(t, eps, INFINITY) : truncated_moments(t, -eps, eps);
  const double v = m.mean - t;
  const double w = 1 - m.var;
  return {{a.mu + va / c * v, std::sqrt(va * (1 - va / (c * c) * w))},
          {b.mu - vb / c * v, std::sqrt(vb * (1 - vb / (c * c) * w))}};
}

MatchRecord match(std::string a, std::string b, RawVote v) {
  return {"m", "t", std::move(a), std::move(b), v, outcome_of(v)};
}

}  // namespace

TEST_CASE("normal helpers") {
  CHECK(normal_cdf(0) == doctest::Approx(0.5));
  CHECK(normal_pdf(0) == doctest::Approx(1 / std::sqrt(2 * M_PI)));
  CHECK(normal_cdf(-30) > 0.0);
  for (double p : {1e-12, 0.01, 0.3, 0.55, 0.9, 0.999999}) {
    CHECK(normal_cdf(normal_inv_cdf(p)) == doctest::Approx(p).epsilon(1e-9));
  }
  // Far tails stay finite and positive.
  for (double t : {-50.0, -20.0, 0.0, 20.0}) {
    CHECK(std::isfinite(v_win(t, 0.3)));
    CHECK(w_win(t, 0.3) > 0.0);
    CHECK(w_win(t, 0.3) <= 1.0);
    CHECK(std::isfinite(v_draw(t, 0.3)));
    CHECK(w_draw(t, 0.3) > 0.0);
  }
}

TEST_CASE("correction factors match truncated moments") {
  for (double t : {-3.0, -1.0, 0.0, 0.4, 2.5}) {
    for (double eps : {0.0, 0.2, 0.74}) {
      const auto win = truncated_moments(t, eps, INFINITY);
      CHECK(v_win(t, eps) == doctest::Approx(win.mean - t).epsilon(1e-7));
      CHECK(w_win(t, eps) == doctest::Approx(1 - win.var).epsilon(1e-7));
      if (eps > 0) {
        const auto draw = truncated_moments(t, -eps, eps);
        CHECK(v_draw(t, eps) == doctest::Approx(draw.mean - t).epsilon(1e-6));
        CHECK(w_draw(t, eps) == doctest::Approx(1 - draw.var).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("fresh players") {
  const Rating fresh;
  CHECK(fresh.mu == 25.0);
  CHECK(fresh.sigma == doctest::Approx(25.0 / 3.0));
  const RatingParams p;
  CHECK(draw_margin(p) == doctest::Approx(oracle_inv_cdf(0.55) * std::sqrt(2.0) * p.beta).epsilon(1e-9));

  const auto [a, b] = trueskill_update(fresh, fresh, Outcome::AWins);
  CHECK(a.mu - 25.0 == doctest::Approx(25.0 - b.mu));
  CHECK(a.mu > 25.0);
  CHECK(a.sigma == doctest::Approx(b.sigma));
  CHECK(a.mu == doctest::Approx(29.396).epsilon(1e-4));
  CHECK(a.sigma == doctest::Approx(7.171).epsilon(1e-3));

  const auto [da, db] = trueskill_update(fresh, fresh, Outcome::Tie);
  CHECK(da.mu == doctest::Approx(25.0));
  CHECK(db.mu == doctest::Approx(25.0));
  CHECK(da.sigma < 25.0 / 3.0);
  CHECK(da.sigma == doctest::Approx(db.sigma));
}

TEST_CASE("update agrees with the quadrature oracle") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> mu(10, 40), sig(1, 9);
  const Outcome outcomes[] = {Outcome::AWins, Outcome::BWins, Outcome::Tie};
  for (int i = 0; i < 60; ++i) {
    const Rating a{mu(rng), sig(rng)}, b{mu(rng), sig(rng)};
    const Outcome o = outcomes[i % 3];
    const auto got = trueskill_update(a, b, o);
    const auto want = oracle_update(a, b, o, RatingParams{});
    CHECK(got.first.mu == doctest::Approx(want.first.mu).epsilon(1e-6));
    CHECK(got.first.sigma == doctest::Approx(want.first.sigma).epsilon(1e-6));
    CHECK(got.second.mu == doctest::Approx(want.second.mu).epsilon(1e-6));
    CHECK(got.second.sigma == doctest::Approx(want.second.sigma).epsilon(1e-6));
  }
}

TEST_CASE("update properties") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> mu(-20, 70), sig(0.05, 12);
  const RatingParams p;
  for (int i = 0; i < 5000; ++i) {
    const Rating a{mu(rng), sig(rng)}, b{mu(rng), sig(rng)};
    const auto ab = trueskill_update(a, b, Outcome::AWins);
    const auto ba = trueskill_update(b, a, Outcome::BWins);
    CHECK(ab.first.mu == doctest::Approx(ba.second.mu));
    CHECK(ab.second.sigma == doctest::Approx(ba.first.sigma));
    CHECK(ab.first.mu >= a.mu);
    CHECK(ab.second.mu <= b.mu);
    CHECK(ab.first.sigma <= std::sqrt(a.sigma * a.sigma + p.tau * p.tau));
    CHECK(ab.second.sigma > 0.0);
    const auto tie = trueskill_update(a, b, Outcome::Tie);
    CHECK(tie.first.sigma <= std::sqrt(a.sigma * a.sigma + p.tau * p.tau));
    // A draw pulls the two means together.
    CHECK((tie.first.mu - tie.second.mu) * (a.mu - b.mu) >= 0.0);
    CHECK(std::abs(tie.first.mu - tie.second.mu) <= std::abs(a.mu - b.mu) + 1e-9);
  }
}

TEST_CASE("validation and names") {
  auto code = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Config;
  };
  CHECK(code([] { trueskill_update({25, 0}, {}, Outcome::Tie); }) == ErrorCode::InvalidArgument);
  CHECK(code([] {
          RatingParams p;
          p.draw_probability = 1.0;
          trueskill_update({}, {}, Outcome::Tie, p);
        }) == ErrorCode::InvalidArgument);
  CHECK(outcome_of(RawVote::BothBad) == Outcome::Tie);
  CHECK(outcome_of(RawVote::B) == Outcome::BWins);
  CHECK(raw_vote_from_string(to_string(RawVote::BothBad)) == RawVote::BothBad);
  CHECK(std::string(to_string(Outcome::AWins)) == "A_WINS");
  CHECK(outcome_from_string("TIE") == Outcome::Tie);
}

TEST_CASE("win rate excludes ties") {
  const std::vector<MatchRecord> ms{match("rat", "cot", RawVote::A), match("direct", "rat", RawVote::B),
                                    match("rat", "cot", RawVote::B), match("rat", "cot", RawVote::Tie)};
  CHECK(win_rate(ms, "rat") == doctest::Approx(66.6667).epsilon(1e-4));
  CHECK(win_rate({match("rat", "cot", RawVote::A)}, "rat") == 100.0);
  try {
    win_rate({match("rat", "cot", RawVote::BothBad)}, "rat");
    FAIL("all ties accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoDecisiveMatches);
  }
}

TEST_CASE("leaderboard") {
  const auto empty = leaderboard({}, {}, {"rat", "cot"});
  REQUIRE(empty.size() == 2);
  for (const auto& [m, s] : empty) {
    CHECK(s.rating == Rating{25.0, 25.0 / 3.0});
    CHECK(s.matches == 0);
    CHECK_FALSE(s.win_rate());
  }
  const std::vector<MatchRecord> ms{match("rat", "cot", RawVote::A)};
  const auto one = leaderboard(ms);
  CHECK(one.at("rat").rating.mu > 25.0);
  CHECK(one.at("cot").rating.mu < 25.0);
  CHECK(one.at("rat").wins == 1);
  CHECK(one.at("cot").losses == 1);

  std::vector<MatchRecord> log;
  std::mt19937_64 rng(1);
  const char* names[] = {"direct", "cot", "rag", "rat"};
  const RawVote votes[] = {RawVote::A, RawVote::B, RawVote::Tie, RawVote::BothBad};
  for (int i = 0; i < 100; ++i) {
    const auto a = rng() % 4;
    const auto b = (a + 1 + rng() % 3) % 4;
    log.push_back(match(names[a], names[b], votes[rng() % 4]));
  }
  const auto csv = leaderboard_csv(leaderboard(log));
  CHECK(csv == leaderboard_csv(leaderboard(log)));
  CHECK(csv.rfind("method,mu,sigma,win_rate,matches\n", 0) == 0);
  const auto order = ranked(leaderboard(log));
  for (std::size_t i = 1; i < order.size(); ++i) CHECK(order[i - 1].second.rating.mu >= order[i].second.rating.mu);
  std::size_t total = 0;
  for (const auto& [m, s] : leaderboard(log)) {
    CHECK(s.matches == s.wins + s.losses + s.ties);
    total += s.matches;
  }
  CHECK(total == 200);
  CHECK(leaderboard_markdown(leaderboard(log)).find("| rat |") != std::string::npos);
}
