// Writes a small keyword-driven multi-label corpus (train/valid/test TSV).
// Each label owns three trigger words; a document carries 1-3 labels, two
// trigger words per label, and filler words everywhere else.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

namespace {

struct Options {
  std::filesystem::path out = "data/synthetic";
  int docs = 20;
  int labels = 8;
  int filler = 40;
  int min_len = 12;
  int max_len = 40;
  std::uint64_t seed = 20220516;
};

std::string label_name(int l) { return "C" + std::string(l < 10 ? "0" : "") + std::to_string(l); }

void write_split(const Options& o, const std::string& name, int docs, std::mt19937_64& rng) {
  std::ofstream out(o.out / (name + ".tsv"), std::ios::binary);
  std::uniform_int_distribution<int> n_labels(1, 3);
  std::uniform_int_distribution<int> pick_label(0, o.labels - 1);
  std::uniform_int_distribution<int> pick_filler(0, o.filler - 1);
  std::uniform_int_distribution<int> pick_len(o.min_len, o.max_len);
  std::uniform_int_distribution<int> pick_trigger(0, 2);
  for (int i = 0; i < docs; ++i) {
    std::vector<int> labels{i % o.labels};  // every label shows up
    for (int extra = n_labels(rng) - 1; extra > 0; --extra) labels.push_back(pick_label(rng));
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());

    std::vector<std::string> tokens(static_cast<std::size_t>(pick_len(rng)));
    for (auto& t : tokens) t = "w" + std::to_string(pick_filler(rng));
    std::uniform_int_distribution<std::size_t> pos(0, tokens.size() - 1);
    for (int l : labels) {
      for (int rep = 0; rep < 2; ++rep) {
        tokens[pos(rng)] = "kw" + std::to_string(l) + "_" + std::to_string(pick_trigger(rng));
      }
    }
    out << name << '-' << i << '\t';
    for (std::size_t j = 0; j < labels.size(); ++j) out << (j ? ";" : "") << label_name(labels[j]);
    out << '\t';
    for (std::size_t j = 0; j < tokens.size(); ++j) out << (j ? " " : "") << tokens[j];
    out << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Generate a synthetic multi-label corpus"};
  app.add_option("--out", o.out, "output directory");
  app.add_option("--docs", o.docs, "documents per split");
  app.add_option("--labels", o.labels, "label count");
  app.add_option("--seed", o.seed, "generator seed");
  CLI11_PARSE(app, argc, argv);

  std::filesystem::create_directories(o.out);
  std::mt19937_64 rng(o.seed);
  write_split(o, "train", o.docs, rng);
  write_split(o, "valid", o.docs, rng);
  write_split(o, "test", o.docs, rng);
  std::cout << "wrote " << o.out.string() << "/{train,valid,test}.tsv\n";
  return 0;
}
