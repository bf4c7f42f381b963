#include "rat/rating.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>

#include "rat/error.hpp"

namespace rat {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;  // 1/sqrt(2*pi)
// Below this, ratios of pdf to cdf are replaced by their tail expansions.
constexpr double kMinDenominator = 1e-280;

// phi(x)/Phi(x) for very negative x, from the Mills-ratio expansion.
double lower_tail_ratio(double x) {
  const double z = -x;
  const double z2 = z * z;
  return 1.0 / (1.0 / z - 1.0 / (z * z2) + 3.0 / (z * z2 * z2));
}

void require_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw Error(ErrorCode::InvalidArgument, std::string(what) + " is not finite");
}

}  // namespace

double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_inv_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::InvalidArgument, "normal_inv_cdf needs p in (0, 1)");
  // Safeguarded Newton on a bracket that always contains the root.
  double lo = -40.0, hi = 40.0, x = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double f = normal_cdf(x) - p;
    if (f == 0.0) return x;
    (f < 0.0 ? lo : hi) = x;
    double next = x - f / normal_pdf(x);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 1e-15 * std::max(1.0, std::abs(x))) return next;
    x = next;
  }
  return x;
}

double v_win(double t, double eps) {
  const double x = t - eps;
  const double denom = normal_cdf(x);
  if (denom < kMinDenominator) return lower_tail_ratio(x);
  return normal_pdf(x) / denom;
}

double w_win(double t, double eps) {
  const double x = t - eps;
  const double v = v_win(t, eps);
  const double w = v * (v + x);
  return std::clamp(w, std::numeric_limits<double>::min(), 1.0);
}

double v_draw(double t, double eps) {
  const double at = std::abs(t);
  const double a = eps - at;
  const double b = -eps - at;
  const double denom = normal_cdf(a) - normal_cdf(b);
  double v;
  if (denom < kMinDenominator) {
    // Mass piles up against the upper bound a.
    v = a < 0.0 ? -lower_tail_ratio(a) : -a;
  } else {
    v = (normal_pdf(b) - normal_pdf(a)) / denom;
  }
  return t < 0.0 ? -v : v;
}

double w_draw(double t, double eps) {
  const double at = std::abs(t);
  const double a = eps - at;
  const double b = -eps - at;
  const double denom = normal_cdf(a) - normal_cdf(b);
  if (denom < kMinDenominator) return 1.0;
  const double v = v_draw(at, eps);
  const double w = v * v + (a * normal_pdf(a) - b * normal_pdf(b)) / denom;
  return std::clamp(w, std::numeric_limits<double>::min(), 1.0);
}

void validate(const Rating& r) {
  require_finite(r.mu, "rating mu");
  require_finite(r.sigma, "rating sigma");
  if (r.sigma <= 0.0) throw Error(ErrorCode::InvalidArgument, "rating sigma must be positive");
}

void validate(const RatingParams& p) {
  require_finite(p.beta, "beta");
  require_finite(p.tau, "tau");
  require_finite(p.draw_probability, "draw probability");
  if (p.beta <= 0.0) throw Error(ErrorCode::InvalidArgument, "beta must be positive");
  if (p.tau < 0.0) throw Error(ErrorCode::InvalidArgument, "tau must be non-negative");
  if (p.draw_probability < 0.0 || p.draw_probability >= 1.0) {
    throw Error(ErrorCode::InvalidArgument, "draw probability must lie in [0, 1)");
  }
  validate(p.prior);
}

double draw_margin(const RatingParams& p) {
  if (p.draw_probability == 0.0) return 0.0;
  return normal_inv_cdf((p.draw_probability + 1.0) / 2.0) * std::numbers::sqrt2 * p.beta;
}

const char* to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::AWins: return "A_WINS";
    case Outcome::BWins: return "B_WINS";
    case Outcome::Tie: return "TIE";
  }
  return "TIE";
}

const char* to_string(RawVote vote) {
  switch (vote) {
    case RawVote::A: return "A";
    case RawVote::B: return "B";
    case RawVote::Tie: return "TIE";
    case RawVote::BothBad: return "BOTH_BAD";
  }
  return "TIE";
}

Outcome outcome_from_string(std::string_view name) {
  if (name == "A_WINS") return Outcome::AWins;
  if (name == "B_WINS") return Outcome::BWins;
  if (name == "TIE") return Outcome::Tie;
  throw Error(ErrorCode::InvalidArgument, "unknown outcome '" + std::string(name) + "'");
}

RawVote raw_vote_from_string(std::string_view name) {
  if (name == "A") return RawVote::A;
  if (name == "B") return RawVote::B;
  if (name == "TIE") return RawVote::Tie;
  if (name == "BOTH_BAD") return RawVote::BothBad;
  throw Error(ErrorCode::InvalidArgument, "unknown vote '" + std::string(name) + "'");
}

Outcome outcome_of(RawVote vote) {
  switch (vote) {
    case RawVote::A: return Outcome::AWins;
    case RawVote::B: return Outcome::BWins;
    case RawVote::Tie:
    case RawVote::BothBad: return Outcome::Tie;
  }
  return Outcome::Tie;
}

std::pair<Rating, Rating> trueskill_update(const Rating& a, const Rating& b, Outcome outcome,
                                           const RatingParams& params) {
  validate(a);
  validate(b);
  validate(params);
  if (outcome == Outcome::BWins) {
    auto [nb, na] = trueskill_update(b, a, Outcome::AWins, params);
    return {na, nb};
  }
  const double tau2 = params.tau * params.tau;
  const double va = a.sigma * a.sigma + tau2;
  const double vb = b.sigma * b.sigma + tau2;
  const double c2 = 2.0 * params.beta * params.beta + va + vb;
  const double c = std::sqrt(c2);
  const double t = (a.mu - b.mu) / c;
  const double eps = draw_margin(params) / c;

  double v, w;
  if (outcome == Outcome::AWins) {
    v = v_win(t, eps);
    w = w_win(t, eps);
  } else {
    v = v_draw(t, eps);
    w = w_draw(t, eps);
  }
  Rating na{a.mu + va / c * v, std::sqrt(va * (1.0 - va / c2 * w))};
  Rating nb{b.mu - vb / c * v, std::sqrt(vb * (1.0 - vb / c2 * w))};
  return {na, nb};
}

double win_rate(const std::vector<MatchRecord>& matches, std::string_view method) {
  std::size_t wins = 0, losses = 0;
  for (const auto& m : matches) {
    if (m.outcome == Outcome::Tie || m.method_a == m.method_b) continue;
    if (m.method_a == method) (m.outcome == Outcome::AWins ? wins : losses) += 1;
    if (m.method_b == method) (m.outcome == Outcome::BWins ? wins : losses) += 1;
  }
  if (wins + losses == 0) {
    throw Error(ErrorCode::NoDecisiveMatches, "method '" + std::string(method) + "' has no decisive matches");
  }
  return 100.0 * static_cast<double>(wins) / static_cast<double>(wins + losses);
}

std::optional<double> Standing::win_rate() const {
  if (wins + losses == 0) return std::nullopt;
  return 100.0 * static_cast<double>(wins) / static_cast<double>(wins + losses);
}

std::map<std::string, Standing> leaderboard(const std::vector<MatchRecord>& events, const RatingParams& params,
                                            const std::vector<std::string>& roster) {
  validate(params);
  std::map<std::string, Standing> board;
  auto entry = [&](const std::string& m) -> Standing& {
    auto [it, fresh] = board.try_emplace(m);
    if (fresh) it->second.rating = params.prior;
    return it->second;
  };
  for (const auto& m : roster) entry(m);
  for (const auto& e : events) {
    if (e.method_a == e.method_b) throw Error(ErrorCode::InvalidArgument, "match '" + e.match_id + "' pits a method against itself");
    Standing& a = entry(e.method_a);
    Standing& b = entry(e.method_b);
    std::tie(a.rating, b.rating) = trueskill_update(a.rating, b.rating, e.outcome, params);
    ++a.matches;
    ++b.matches;
    switch (e.outcome) {
      case Outcome::AWins: ++a.wins, ++b.losses; break;
      case Outcome::BWins: ++b.wins, ++a.losses; break;
      case Outcome::Tie: ++a.ties, ++b.ties; break;
    }
  }
  return board;
}

std::vector<std::pair<std::string, Standing>> ranked(const std::map<std::string, Standing>& board) {
  std::vector<std::pair<std::string, Standing>> rows(board.begin(), board.end());
  std::stable_sort(rows.begin(), rows.end(), [](const auto& x, const auto& y) {
    if (x.second.rating.mu != y.second.rating.mu) return x.second.rating.mu > y.second.rating.mu;
    return x.first < y.first;
  });
  return rows;
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string leaderboard_csv(const std::map<std::string, Standing>& board) {
  std::ostringstream out;
  out << "method,mu,sigma,win_rate,matches\n";
  for (const auto& [method, s] : ranked(board)) {
    const auto wr = s.win_rate();
    out << method << ',' << fixed(s.rating.mu, 6) << ',' << fixed(s.rating.sigma, 6) << ','
        << (wr ? fixed(*wr, 6) : std::string()) << ',' << s.matches << '\n';
  }
  return out.str();
}

std::string leaderboard_markdown(const std::map<std::string, Standing>& board) {
  std::ostringstream out;
  out << "| Rank | Method | TrueSkill (mu) | Uncertainty (sigma) | Win Rate (%) | Matches |\n";
  out << "|---:|---|---:|---:|---:|---:|\n";
  std::size_t rank = 0;
  for (const auto& [method, s] : ranked(board)) {
    const auto wr = s.win_rate();
    out << "| " << ++rank << " | " << method << " | " << fixed(s.rating.mu, 2) << " | " << fixed(s.rating.sigma, 2)
        << " | " << (wr ? fixed(*wr, 2) : std::string("n/a")) << " | " << s.matches << " |\n";
  }
  out << "\nWin rate counts decisive matches only; ties are excluded.\n";
  return out.str();
}

}  // namespace rat
