// analytics: aggregates over a results table. Prints an aligned table, then
// the same rows as CSV after a "# rows" marker (or JSON with --json).

#include <CLI11.hpp>

#include <iomanip>
#include <iostream>

#include "tablebench/analytics/aggregate.hpp"
#include "tablebench/protocol/json.hpp"

namespace {

using tb::analytics::Rational;

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

void print(const Table& t, bool json) {
  if (json) {
    tb::Json out = tb::Json::array();
    for (const auto& r : t.rows) {
      tb::Json row = tb::Json::object();
      for (std::size_t i = 0; i < t.header.size(); ++i) row[t.header[i]] = r[i];
      out.push_back(row);
    }
    std::cout << out.dump(2) << "\n";
    return;
  }
  std::vector<std::size_t> width(t.header.size());
  for (std::size_t i = 0; i < t.header.size(); ++i) width[i] = t.header[i].size();
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  }
  const auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i == 0) {
        std::cout << std::left << std::setw(static_cast<int>(width[i])) << cells[i];
      } else {
        std::cout << "  " << std::right << std::setw(static_cast<int>(width[i])) << cells[i];
      }
    }
    std::cout << "\n";
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
  std::cout << "# rows\n";
  const auto csv = [](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const bool quote = cells[i].find_first_of(",\"") != std::string::npos;
      std::string cell = cells[i];
      if (quote) {
        std::string escaped;
        for (char c : cell) {
          if (c == '"') escaped += '"';
          escaped += c;
        }
        cell = "\"" + escaped + "\"";
      }
      std::cout << (i ? "," : "") << cell;
    }
    std::cout << "\n";
  };
  csv(t.header);
  for (const auto& r : t.rows) csv(r);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Benchmark result aggregation"};
  app.require_subcommand(1);
  std::string input;
  std::string tags_file;
  std::string model;
  std::string metric_name = "score";
  bool json = false;
  app.add_option("--input", input, "Results CSV: model,task,sr,score[,user]");
  app.add_flag("--json", json, "Print JSON rows only");

  auto* avg = app.add_subcommand("avg", "Mean SR and score per model");
  auto* cdf = app.add_subcommand("cdf", "One model's per-task values, sorted descending");
  cdf->add_option("--model", model)->required();
  cdf->add_option("--metric", metric_name, "sr | score");
  auto* tags = app.add_subcommand("tags", "Mean over tasks carrying each tag");
  tags->add_option("--tags", tags_file, "Tag CSV: task,tags")->required();
  auto* rank = app.add_subcommand("rank", "Ranklist by mean SR, then mean score");
  for (auto* sub : {avg, cdf, tags, rank}) {
    sub->add_option("--input", input);
    sub->add_flag("--json", json);
  }
  CLI11_PARSE(app, argc, argv);
  if (input.empty()) {
    std::cerr << "analytics: --input is required\n";
    return 2;
  }

  try {
    const auto table = tb::analytics::read_results_csv_file(input);
    Table out;
    if (avg->parsed()) {
      out.header = {"model", "sr", "score"};
      for (const auto& a : tb::analytics::model_averages(table)) {
        out.rows.push_back({a.model, a.sr.rounded(1), a.score.rounded(1)});
      }
    } else if (cdf->parsed()) {
      const auto metric = tb::analytics::parse_metric(metric_name);
      if (!metric) throw tb::Error(tb::ErrorCode::kInvalidArgument, "metric must be sr or score");
      out.header = {"rank", "task", std::string(tb::analytics::to_string(*metric))};
      int i = 1;
      for (const auto& p : tb::analytics::cumulative_distribution(table, model, *metric)) {
        out.rows.push_back({std::to_string(i++), p.task, tb::analytics::format_milli(p.value)});
      }
    } else if (tags->parsed()) {
      const auto tag_map = tb::analytics::read_tags_csv_file(tags_file);
      out.header = {"tag", "tasks", "sr", "score"};
      for (const auto& t : tb::analytics::tag_aggregate(table, tag_map)) {
        out.rows.push_back({t.tag, std::to_string(t.task_count), std::to_string(t.sr.rounded_int()),
                            std::to_string(t.score.rounded_int())});
      }
      const auto all = tb::analytics::global_aggregate(table);
      out.rows.push_back({"all tasks", std::to_string(all.task_count), std::to_string(all.sr.rounded_int()),
                          std::to_string(all.score.rounded_int())});
    } else {
      out.header = {"rank", "model", "user", "sr", "score", "tied"};
      for (const auto& r : tb::analytics::ranklist(table)) {
        out.rows.push_back({std::to_string(r.rank), r.display_name, r.user, r.sr.rounded(1), r.score.rounded(1),
                            r.tied ? "yes" : "no"});
      }
    }
    print(out, json);
  } catch (const std::exception& e) {
    std::cerr << "analytics: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
