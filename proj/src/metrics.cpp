#include "vihd/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "vihd/error.hpp"

namespace vihd::metrics {

using json = nlohmann::json;

double green_score(std::int64_t matched, std::int64_t errors) {
  if (matched < 0 || errors < 0) throw ValidationError("GREEN counts must be non-negative");
  if (matched + errors == 0) return 1.0;
  return static_cast<double>(matched) / static_cast<double>(matched + errors);
}

LabeledSample from_counts(std::string sample_id, std::int64_t matched, std::int64_t errors) {
  LabeledSample s;
  s.sample_id = std::move(sample_id);
  s.matched = matched;
  s.errors = errors;
  s.green = green_score(matched, errors);
  s.hallucinated = s.green < 1.0;
  return s;
}

LabeledSample from_green(std::string sample_id, double green) {
  if (!(green >= 0.0 && green <= 1.0)) {
    throw ValidationError("sample '" + sample_id + "': green must be in [0, 1]");
  }
  LabeledSample s;
  s.sample_id = std::move(sample_id);
  s.green = green;
  s.hallucinated = green < 1.0;
  return s;
}

double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ShapeError("auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

  // Rank-sum over positives with mid-ranks for ties.
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t m = i; m < j; ++m) {
      if (labels[order[m]]) {
        rank_sum += mid_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw MetricError("auc: needs at least one hallucinated and one non-hallucinated sample");
  }
  const double np = static_cast<double>(n_pos);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

double aug(std::span<const double> scores, std::span<const double> green) {
  if (scores.size() != green.size()) throw ShapeError("aug: scores and green differ in length");
  if (scores.empty()) throw MetricError("aug: empty input");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return scores[a] < scores[b]; });
  double prefix = 0.0;
  double area = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    prefix += green[order[k]];
    area += prefix / static_cast<double>(k + 1);
  }
  return area / static_cast<double>(order.size());
}

std::vector<RocPoint> roc_curve(std::span<const double> scores,
                                std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ShapeError("roc: scores and labels differ in length");
  const auto n_pos = static_cast<double>(std::count_if(labels.begin(), labels.end(),
                                                       [](auto l) { return l != 0; }));
  const double n_neg = static_cast<double>(labels.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0) throw MetricError("roc: single-class input");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });

  std::vector<RocPoint> out{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  double tp = 0.0, fp = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    while (i < order.size() && scores[order[i]] == threshold) {
      (labels[order[i]] ? tp : fp) += 1.0;
      ++i;
    }
    out.push_back({threshold, fp / n_neg, tp / n_pos});
  }
  return out;
}

json to_json(const MetricReport& r) {
  return {{"auc", r.auc}, {"aug", r.aug}, {"n", r.n}, {"n_pos", r.n_pos}};
}

MetricReport evaluate(std::span<const cse::DetectionRecord> records,
                      std::span<const LabeledSample> labels, const std::string& subset,
                      std::vector<RocPoint>* roc) {
  std::unordered_map<std::string, const LabeledSample*> by_id;
  for (const auto& l : labels) {
    if (!by_id.emplace(l.sample_id, &l).second) {
      throw ValidationError("labels: duplicate sample_id '" + l.sample_id + "'");
    }
  }
  std::vector<double> scores, green;
  std::vector<std::uint8_t> hallucinated;
  for (const auto& r : records) {
    const auto it = by_id.find(r.sample_id);
    if (it == by_id.end()) throw ValidationError("no label for sample '" + r.sample_id + "'");
    if (!subset.empty() && it->second->subset != subset) continue;
    scores.push_back(r.cse);
    green.push_back(it->second->green);
    hallucinated.push_back(it->second->hallucinated ? 1 : 0);
  }
  MetricReport rep;
  rep.n = scores.size();
  rep.n_pos = static_cast<std::size_t>(std::count(hallucinated.begin(), hallucinated.end(), 1));
  rep.auc = auc(scores, hallucinated);
  rep.aug = aug(scores, green);
  if (roc) *roc = roc_curve(scores, hallucinated);
  return rep;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  return out;
}

std::int64_t parse_count(const std::string& cell, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("labels line " + std::to_string(line_no) + ": bad count '" + cell + "'");
  }
}

}  // namespace

std::vector<LabeledSample> read_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open labels " + path.string());
  std::string first;
  std::getline(in, first);
  std::vector<LabeledSample> out;
  std::size_t line_no = 1;
  std::string line;

  const auto header = split_csv(first);
  if (header.size() >= 3 && header[0] == "sample_id" && header[1] == "matched" &&
      header[2] == "errors") {
    const bool has_subset = header.size() >= 4 && header[3] == "subset";
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const auto cells = split_csv(line);
      if (cells.size() < 3) {
        throw ValidationError("labels line " + std::to_string(line_no) + ": expected 3 columns");
      }
      auto s = from_counts(cells[0], parse_count(cells[1], line_no), parse_count(cells[2], line_no));
      if (has_subset && cells.size() >= 4) s.subset = cells[3];
      out.push_back(std::move(s));
    }
    return out;
  }

  auto parse_jsonl = [&](const std::string& text, std::size_t no) {
    if (text.find_first_not_of(" \t\r") == std::string::npos) return;
    try {
      const auto j = json::parse(text);
      const auto id = j.at("sample_id").get<std::string>();
      LabeledSample s;
      if (j.contains("green")) {
        s = from_green(id, j.at("green").get<double>());
      } else {
        s = from_counts(id, j.at("matched").get<std::int64_t>(), j.at("errors").get<std::int64_t>());
      }
      s.subset = j.value("subset", std::string{});
      out.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw ValidationError("labels line " + std::to_string(no) + ": " + e.what());
    }
  };
  parse_jsonl(first, 1);
  while (std::getline(in, line)) parse_jsonl(line, ++line_no);
  return out;
}

void write_labels_jsonl(std::span<const LabeledSample> labels, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& l : labels) {
    json j = {{"sample_id", l.sample_id}, {"green", l.green}};
    if (!l.subset.empty()) j["subset"] = l.subset;
    out << j.dump() << "\n";
  }
}

std::vector<cse::DetectionRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open records " + path.string());
  std::vector<cse::DetectionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(cse::record_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw ValidationError("records line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_records(std::span<const cse::DetectionRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& r : records) out << cse::to_json(r).dump() << "\n";
}

void write_roc_csv(std::span<const RocPoint> roc, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "threshold,fpr,tpr\n";
  for (const auto& p : roc) out << p.threshold << "," << p.fpr << "," << p.tpr << "\n";
}

}  // namespace vihd::metrics
