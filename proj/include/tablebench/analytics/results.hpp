#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace tb::analytics {

// Metric values are carried as exact thousandths so that averages and
// rounding never depend on binary floating point.
using Milli = std::int64_t;

Milli parse_milli(std::string_view text);
std::string format_milli(Milli value);

// Exact non-negative-denominator fraction.
class Rational {
 public:
  Rational() = default;
  Rational(__int128 num, __int128 den);

  static Rational from_milli(Milli value) { return Rational(value, 1000); }

  double to_double() const;
  // Rounds half away from zero to `decimals` places, rendered as text.
  std::string rounded(int decimals) const;
  std::int64_t rounded_int() const;

  friend bool operator==(const Rational& a, const Rational& b);
  friend bool operator<(const Rational& a, const Rational& b);
  friend bool operator>(const Rational& a, const Rational& b) { return b < a; }
  friend bool operator<=(const Rational& a, const Rational& b) { return !(b < a); }
  friend bool operator>=(const Rational& a, const Rational& b) { return !(a < b); }

 private:
  __int128 num_ = 0;
  __int128 den_ = 1;
};

Rational mean_of(const std::vector<Milli>& values);

struct ResultRow {
  std::string model;
  std::string task;
  Milli sr = 0;
  Milli score = 0;
  // Submitting user; rows with the same user and display name rank as one entry.
  std::string user;
};

class ResultsTable {
 public:
  ResultsTable() = default;
  explicit ResultsTable(std::vector<ResultRow> rows);

  const std::vector<ResultRow>& rows() const { return rows_; }
  std::vector<std::string> models() const;  // first-appearance order
  std::vector<std::string> tasks() const;   // first-appearance order
  bool has_model(std::string_view model) const;

 private:
  std::vector<ResultRow> rows_;
};

// CSV with header `model,task,sr,score[,user]`. Fields may be double-quoted.
ResultsTable read_results_csv(std::istream& in);
ResultsTable read_results_csv_file(const std::string& path);

enum class Metric { kSuccessRate, kScore };

std::string_view to_string(Metric metric);
std::optional<Metric> parse_metric(std::string_view name);

inline constexpr std::array<std::string_view, 9> kTagVocabulary = {
    "temporal",       "softbody",     "precise3d",  "bimanual", "multiview",
    "repeated",       "classification", "manipulation", "simple-pick"};

using TagMap = std::map<std::string, std::set<std::string>>;

// CSV with header `task,tags`; tags separated by ';'. Unknown tags are rejected.
TagMap read_tags_csv(std::istream& in);
TagMap read_tags_csv_file(const std::string& path);

}  // namespace tb::analytics
