// store: episode store maintenance.

#include <CLI11.hpp>

#include <iostream>

#include "tablebench/server/recorder.hpp"
#include "tablebench/store/episode_store.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Episode store tools"};
  app.require_subcommand(1);
  std::string root = "tb-store";
  std::string task;
  app.add_option("--root", root, "Store root directory");

  auto* exp = app.add_subcommand("export", "Export a task's demonstrations, references excluded");
  std::string out;
  exp->add_option("--task", task)->required();
  exp->add_option("--out", out)->required();

  auto* hold = app.add_subcommand("holdout", "Select reference episodes for a task");
  std::size_t n = 10;
  std::uint64_t seed = 0;
  hold->add_option("--task", task)->required();
  hold->add_option("--n", n);
  hold->add_option("--seed", seed)->required();

  auto* list = app.add_subcommand("list", "List episodes");

  auto* replay = app.add_subcommand("replay", "Replay an evaluation episode against the simulator");
  std::string episode;
  replay->add_option("--episode", episode)->required();

  for (auto* sub : {exp, hold, list, replay}) sub->add_option("--root", root);
  CLI11_PARSE(app, argc, argv);

  try {
    tb::store::EpisodeStore store(root);
    if (exp->parsed()) {
      const auto manifest = store.export_dataset(task, out);
      std::cout << "exported " << manifest.episodes.size() << " of " << manifest.available << " episodes to " << out
                << "\n";
      if (manifest.notice) std::cout << "notice: " << *manifest.notice << "\n";
    } else if (hold->parsed()) {
      const auto sel = store.select_reference_frames(task, n, seed);
      for (const auto& id : sel.episode_ids) std::cout << id << "\n";
    } else if (list->parsed()) {
      for (const auto& id : store.episode_ids()) {
        const auto meta = store.meta(id);
        std::cout << id << "  " << meta.task_id << "  " << to_string(store.effective_kind(id)) << "  "
                  << (store.is_closed(id) ? "closed" : "open") << "\n";
      }
    } else {
      const auto report = tb::server::replay_episode(store, episode);
      std::cout << "ticks " << report.ticks << ", mismatches " << report.mismatches << "\n";
      return report.exact() ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "store: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
