#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rat {

// Standard normal helpers. The cdf goes through std::erfc so it keeps full
// relative precision in the lower tail.
double normal_pdf(double x);
double normal_cdf(double x);
/// Inverse of normal_cdf on (0, 1).
double normal_inv_cdf(double p);

// Truncated-Gaussian correction factors, in units of the performance spread:
// t is the normalized mean difference, eps the normalized draw margin.
double v_win(double t, double eps);
double w_win(double t, double eps);
double v_draw(double t, double eps);
double w_draw(double t, double eps);

struct Rating {
  double mu = 25.0;
  double sigma = 25.0 / 3.0;

  friend bool operator==(const Rating&, const Rating&) = default;
};

struct RatingParams {
  double beta = 25.0 / 6.0;
  double tau = 25.0 / 300.0;
  double draw_probability = 0.10;
  Rating prior;
};

void validate(const Rating& r);
void validate(const RatingParams& p);

/// Draw margin implied by the draw probability for a two-player match.
double draw_margin(const RatingParams& p);

enum class Outcome { AWins, BWins, Tie };
enum class RawVote { A, B, Tie, BothBad };

const char* to_string(Outcome outcome);
const char* to_string(RawVote vote);
Outcome outcome_from_string(std::string_view name);
RawVote raw_vote_from_string(std::string_view name);

/// "Both are bad" counts as a tie.
Outcome outcome_of(RawVote vote);

std::pair<Rating, Rating> trueskill_update(const Rating& a, const Rating& b, Outcome outcome,
                                           const RatingParams& params = {});

struct MatchRecord {
  std::string match_id;
  std::string task_id;
  std::string method_a;
  std::string method_b;
  RawVote raw_vote = RawVote::Tie;
  Outcome outcome = Outcome::Tie;

  friend bool operator==(const MatchRecord&, const MatchRecord&) = default;
};

/// Percent of decisive matches won by `method`; ties do not count.
double win_rate(const std::vector<MatchRecord>& matches, std::string_view method);

struct Standing {
  Rating rating;
  std::size_t matches = 0;
  std::size_t wins = 0;
  std::size_t losses = 0;
  std::size_t ties = 0;

  std::optional<double> win_rate() const;
};

/// Folds trueskill_update over the events in order. Every method in `roster`
/// appears even without matches, at the prior.
std::map<std::string, Standing> leaderboard(const std::vector<MatchRecord>& events, const RatingParams& params = {},
                                            const std::vector<std::string>& roster = {});

/// Rows sorted by mu descending, then method name; six decimals; win_rate
/// empty when a method has no decisive match. Byte-stable for a given input.
std::string leaderboard_csv(const std::map<std::string, Standing>& board);
std::string leaderboard_markdown(const std::map<std::string, Standing>& board);

/// Methods in leaderboard order.
std::vector<std::pair<std::string, Standing>> ranked(const std::map<std::string, Standing>& board);

}  // namespace rat
