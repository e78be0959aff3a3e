#include "tablebench/analytics/results.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <numeric>
#include <sstream>
#include <tuple>

#include "tablebench/protocol/error.hpp"

namespace tb::analytics {
namespace {

__int128 abs128(__int128 v) { return v < 0 ? -v : v; }

__int128 gcd128(__int128 a, __int128 b) {
  a = abs128(a);
  b = abs128(b);
  while (b != 0) {
    const __int128 t = a % b;
    a = b;
    b = t;
  }
  return a;
}

std::string to_string128(__int128 v) {
  if (v == 0) return "0";
  const bool neg = v < 0;
  std::string digits;
  for (__int128 x = abs128(v); x > 0; x /= 10) digits.push_back(static_cast<char>('0' + x % 10));
  if (neg) digits.push_back('-');
  std::reverse(digits.begin(), digits.end());
  return digits;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

// Reads non-empty, non-comment lines; the first is the header.
std::vector<std::vector<std::string>> read_csv(std::istream& in, std::vector<std::string>& header) {
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (!have_header) {
      header = split_csv_line(t);
      have_header = true;
    } else {
      rows.push_back(split_csv_line(t));
    }
  }
  if (!have_header) throw Error(ErrorCode::kInvalidArgument, "csv input has no header");
  return rows;
}

int column(const std::vector<std::string>& header, std::string_view name, bool required) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  if (required) throw Error(ErrorCode::kInvalidArgument, "csv header lacks column '" + std::string(name) + "'");
  return -1;
}

}  // namespace

Milli parse_milli(std::string_view text) {
  const std::string s = trim(text);
  if (s.empty()) throw Error(ErrorCode::kInvalidArgument, "empty numeric field");
  std::size_t i = 0;
  bool neg = false;
  if (s[i] == '-' || s[i] == '+') neg = s[i++] == '-';
  Milli whole = 0;
  Milli frac = 0;
  int frac_digits = 0;
  bool any_digit = false;
  for (; i < s.size() && s[i] != '.'; ++i) {
    if (s[i] < '0' || s[i] > '9') throw Error(ErrorCode::kInvalidArgument, "bad number '" + s + "'");
    whole = whole * 10 + (s[i] - '0');
    any_digit = true;
  }
  if (i < s.size()) {
    for (++i; i < s.size(); ++i) {
      if (s[i] < '0' || s[i] > '9') throw Error(ErrorCode::kInvalidArgument, "bad number '" + s + "'");
      if (++frac_digits > 3) {
        throw Error(ErrorCode::kInvalidArgument, "more than three decimals in '" + s + "'");
      }
      frac = frac * 10 + (s[i] - '0');
      any_digit = true;
    }
  }
  if (!any_digit) throw Error(ErrorCode::kInvalidArgument, "bad number '" + s + "'");
  for (int d = frac_digits; d < 3; ++d) frac *= 10;
  const Milli v = whole * 1000 + frac;
  return neg ? -v : v;
}

std::string format_milli(Milli value) {
  const bool neg = value < 0;
  const Milli a = neg ? -value : value;
  std::string out = (neg ? "-" : "") + std::to_string(a / 1000);
  Milli frac = a % 1000;
  if (frac != 0) {
    std::string f = std::to_string(frac);
    f.insert(0, 3 - f.size(), '0');
    while (!f.empty() && f.back() == '0') f.pop_back();
    out += "." + f;
  }
  return out;
}

Rational::Rational(__int128 num, __int128 den) {
  if (den == 0) throw Error(ErrorCode::kInvalidArgument, "zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const __int128 g = gcd128(num, den);
  num_ = g ? num / g : num;
  den_ = g ? den / g : den;
}

double Rational::to_double() const {
  return static_cast<double>(num_) / static_cast<double>(den_);
}

std::string Rational::rounded(int decimals) const {
  __int128 scale = 1;
  for (int i = 0; i < decimals; ++i) scale *= 10;
  const __int128 scaled = abs128(num_) * scale;
  // floor(x + 1/2) on the magnitude, sign restored afterwards.
  __int128 q = (2 * scaled + den_) / (2 * den_);
  const bool neg = num_ < 0 && q != 0;
  std::string digits = to_string128(q);
  if (decimals > 0) {
    if (static_cast<int>(digits.size()) <= decimals) {
      digits.insert(0, static_cast<std::size_t>(decimals + 1) - digits.size(), '0');
    }
    digits.insert(digits.size() - static_cast<std::size_t>(decimals), ".");
  }
  return (neg ? "-" : "") + digits;
}

std::int64_t Rational::rounded_int() const { return std::stoll(rounded(0)); }

bool operator==(const Rational& a, const Rational& b) {
  return a.num_ == b.num_ && a.den_ == b.den_;
}

bool operator<(const Rational& a, const Rational& b) { return a.num_ * b.den_ < b.num_ * a.den_; }

Rational mean_of(const std::vector<Milli>& values) {
  if (values.empty()) throw Error(ErrorCode::kInvalidArgument, "mean of empty set");
  __int128 sum = 0;
  for (Milli v : values) sum += v;
  return Rational(sum, static_cast<__int128>(values.size()) * 1000);
}

ResultsTable::ResultsTable(std::vector<ResultRow> rows) : rows_(std::move(rows)) {
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  for (const auto& r : rows_) {
    if (!seen.insert({r.user, r.model, r.task}).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate row for model '" + r.model + "' task '" + r.task + "'");
    }
    if (r.sr < 0 || r.sr > 100000 || r.score < 0 || r.score > 100000) {
      throw Error(ErrorCode::kInvalidArgument, "metric out of [0,100] for model '" + r.model + "'");
    }
  }
}

std::vector<std::string> ResultsTable::models() const {
  std::vector<std::string> out;
  for (const auto& r : rows_) {
    if (std::find(out.begin(), out.end(), r.model) == out.end()) out.push_back(r.model);
  }
  return out;
}

std::vector<std::string> ResultsTable::tasks() const {
  std::vector<std::string> out;
  for (const auto& r : rows_) {
    if (std::find(out.begin(), out.end(), r.task) == out.end()) out.push_back(r.task);
  }
  return out;
}

bool ResultsTable::has_model(std::string_view model) const {
  return std::any_of(rows_.begin(), rows_.end(), [&](const auto& r) { return r.model == model; });
}

ResultsTable read_results_csv(std::istream& in) {
  std::vector<std::string> header;
  const auto rows = read_csv(in, header);
  const int model = column(header, "model", true);
  const int task = column(header, "task", true);
  const int sr = column(header, "sr", true);
  const int score = column(header, "score", true);
  const int user = column(header, "user", false);
  std::vector<ResultRow> out;
  for (const auto& f : rows) {
    const auto need = static_cast<std::size_t>(std::max({model, task, sr, score, user}) + 1);
    if (f.size() < need) throw Error(ErrorCode::kInvalidArgument, "short csv row");
    ResultRow r;
    r.model = f[static_cast<std::size_t>(model)];
    r.task = f[static_cast<std::size_t>(task)];
    r.sr = parse_milli(f[static_cast<std::size_t>(sr)]);
    r.score = parse_milli(f[static_cast<std::size_t>(score)]);
    if (user >= 0) r.user = f[static_cast<std::size_t>(user)];
    out.push_back(std::move(r));
  }
  return ResultsTable(std::move(out));
}

ResultsTable read_results_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kNotFound, "cannot open " + path);
  return read_results_csv(in);
}

std::string_view to_string(Metric metric) { return metric == Metric::kScore ? "score" : "sr"; }

std::optional<Metric> parse_metric(std::string_view name) {
  if (name == "sr") return Metric::kSuccessRate;
  if (name == "score") return Metric::kScore;
  return std::nullopt;
}

TagMap read_tags_csv(std::istream& in) {
  std::vector<std::string> header;
  const auto rows = read_csv(in, header);
  const int task = column(header, "task", true);
  const int tags = column(header, "tags", true);
  TagMap out;
  for (const auto& f : rows) {
    if (f.size() <= static_cast<std::size_t>(std::max(task, tags))) {
      throw Error(ErrorCode::kInvalidArgument, "short csv row");
    }
    auto& set = out[f[static_cast<std::size_t>(task)]];
    std::stringstream ss(f[static_cast<std::size_t>(tags)]);
    std::string tag;
    while (std::getline(ss, tag, ';')) {
      tag = trim(tag);
      if (tag.empty()) continue;
      if (std::find(kTagVocabulary.begin(), kTagVocabulary.end(), tag) == kTagVocabulary.end()) {
        throw Error(ErrorCode::kInvalidArgument, "unknown tag '" + tag + "'");
      }
      set.insert(tag);
    }
  }
  return out;
}

TagMap read_tags_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kNotFound, "cannot open " + path);
  return read_tags_csv(in);
}

}  // namespace tb::analytics
