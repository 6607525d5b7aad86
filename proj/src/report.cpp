#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "empathy/csv.hpp"
#include "empathy/experiment.hpp"
#include "empathy/text.hpp"

namespace empathy::bench {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

class Emitter {
public:
  explicit Emitter(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  std::ofstream open(const std::string& name) {
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw DataError("cannot write " + (dir_ / name).string());
    written_.push_back(name);
    return out;
  }

  std::vector<std::string> written() const { return written_; }

private:
  fs::path dir_;
  std::vector<std::string> written_;
};

std::string cell(const ordered_json& v) {
  if (v.is_null()) return "";
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) return text::fixed(v.get<double>(), 4);
  return v.dump();
}

std::string label_cell(const ordered_json& v) { return v.is_null() ? "" : v.dump(); }

struct Source {
  std::string name;
  const ordered_json* predictions;
  std::vector<std::string> ids;
  const ordered_json* confusion;
};

std::vector<Source> prediction_sources(const EvaluationReport& r) {
  std::vector<std::string> test_ids;
  for (const auto& t : r.dataset["test_truth"]) test_ids.push_back(t["id"].get<std::string>());
  std::vector<Source> out;
  if (!r.llm_baselines.is_null()) {
    for (const auto& e : r.llm_baselines["entries"]) {
      out.push_back({"llm:" + e["model"].get<std::string>() + ":" + e["prompt"].get<std::string>(),
                     &e["predictions"], test_ids, &e["confusion"]});
    }
  }
  if (!r.classifiers.is_null()) {
    for (const auto& e : r.classifiers["results"]) {
      out.push_back({"classifier:" + e["features"].get<std::string>() + ":" + e["classifier"].get<std::string>(),
                     &e["predictions"], e["record_ids"].get<std::vector<std::string>>(), &e["confusion"]});
    }
  }
  if (!r.finetune.is_null()) {
    for (const auto& j : r.finetune["jobs"]) {
      if (!j.contains("predictions")) continue;
      out.push_back({"finetune:" + j["label"].get<std::string>(), &j["predictions"], test_ids, &j["confusion"]});
    }
  }
  return out;
}

// --- svg -----------------------------------------------------------------

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};

void svg_sweep(std::ostream& out, const ordered_json& curves) {
  const double w = 640, h = 400, left = 50, right = 140, top = 20, bottom = 40;
  std::size_t max_k = 1;
  for (const auto& c : curves) max_k = std::max(max_k, c["sweep"].size());
  auto px = [&](double k) { return left + (k - 1) / std::max<double>(1.0, max_k - 1) * (w - left - right); };
  auto py = [&](double a) { return top + (1.0 - a) * (h - top - bottom); };
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << py(0) << "\" x2=\"" << w - right << "\" y2=\"" << py(0)
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << py(0) << "\" x2=\"" << left << "\" y2=\"" << py(1)
      << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double a = t / 4.0;
    out << "<text x=\"" << left - 6 << "\" y=\"" << py(a) + 4 << "\" font-size=\"10\" text-anchor=\"end\">"
        << text::fixed(a, 2) << "</text>\n";
  }
  out << "<text x=\"" << (left + w - right) / 2 << "\" y=\"" << h - 8
      << "\" font-size=\"11\" text-anchor=\"middle\">features kept (k)</text>\n";
  std::size_t i = 0;
  for (const auto& c : curves) {
    const char* colour = kPalette[i % std::size(kPalette)];
    out << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& p : c["sweep"]) {
      out << text::fixed(px(p["k"].get<double>()), 1) << ',' << text::fixed(py(p["accuracy"].get<double>()), 1)
          << ' ';
    }
    out << "\"/>\n";
    out << "<text x=\"" << w - right + 10 << "\" y=\"" << top + 14 * (i + 1) << "\" font-size=\"11\" fill=\""
        << colour << "\">" << c["classifier"].get<std::string>() << "</text>\n";
    ++i;
  }
  out << "</svg>\n";
}

void svg_bars(std::ostream& out, const ordered_json& results) {
  std::vector<std::string> families, classifiers;
  std::map<std::pair<std::string, std::string>, double> acc;
  for (const auto& e : results) {
    const auto f = e["features"].get<std::string>(), c = e["classifier"].get<std::string>();
    if (std::find(families.begin(), families.end(), f) == families.end()) families.push_back(f);
    if (std::find(classifiers.begin(), classifiers.end(), c) == classifiers.end()) classifiers.push_back(c);
    acc[{f, c}] = e["accuracy"].get<double>();
  }
  const double group = 20.0 * static_cast<double>(classifiers.size()) + 30.0;
  const double w = 60 + group * static_cast<double>(families.size()) + 80, h = 320, base = 280, span = 250;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<line x1=\"50\" y1=\"" << base << "\" x2=\"" << w - 80 << "\" y2=\"" << base << "\" stroke=\"black\"/>\n";
  for (std::size_t f = 0; f < families.size(); ++f) {
    const double x0 = 60 + group * static_cast<double>(f);
    for (std::size_t c = 0; c < classifiers.size(); ++c) {
      const auto it = acc.find({families[f], classifiers[c]});
      if (it == acc.end()) continue;
      const double bh = it->second * span;
      out << "<rect x=\"" << x0 + 20.0 * static_cast<double>(c) << "\" y=\"" << text::fixed(base - bh, 1)
          << "\" width=\"16\" height=\"" << text::fixed(bh, 1) << "\" fill=\"" << kPalette[c % std::size(kPalette)]
          << "\"/>\n";
    }
    out << "<text x=\"" << x0 + group / 2 - 15 << "\" y=\"" << base + 16 << "\" font-size=\"11\" text-anchor=\"middle\">"
        << families[f] << "</text>\n";
  }
  for (std::size_t c = 0; c < classifiers.size(); ++c) {
    out << "<text x=\"" << w - 70 << "\" y=\"" << 20 + 14 * c << "\" font-size=\"11\" fill=\""
        << kPalette[c % std::size(kPalette)] << "\">" << classifiers[c] << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace

std::vector<std::string> emit_report(const EvaluationReport& r, const fs::path& dir, const EmitOptions& options) {
  Emitter emit(dir);
  emit.open("report.json") << r.to_json().dump(2) << '\n';

  if (!r.classifiers.is_null()) {
    const auto& results = r.classifiers["results"];
    {
      auto out = emit.open("classifier_accuracy.csv");
      csv::write_row(out, {"features", "classifier", "accuracy", "correct", "total"});
      for (const auto& e : results) {
        csv::write_row(out, {cell(e["features"]), cell(e["classifier"]), cell(e["accuracy"]), cell(e["correct"]),
                             cell(e["total"])});
      }
    }
    std::vector<std::string> families;
    for (const auto& e : results) {
      const auto f = e["features"].get<std::string>();
      if (std::find(families.begin(), families.end(), f) == families.end()) families.push_back(f);
    }
    for (const auto& f : families) {
      auto out = emit.open("accuracy_" + f + ".csv");
      csv::write_row(out, {"classifier", "accuracy"});
      for (const auto& e : results) {
        if (e["features"] == f) csv::write_row(out, {cell(e["classifier"]), cell(e["accuracy"])});
      }
    }
  }

  if (!r.llm_baselines.is_null()) {
    auto out = emit.open("llm_baselines.csv");
    csv::write_row(out, {"model", "prompt", "accuracy", "correct", "total", "failures"});
    for (const auto& e : r.llm_baselines["entries"]) {
      csv::write_row(out, {cell(e["model"]), cell(e["prompt"]), cell(e["accuracy"]), cell(e["correct"]),
                           cell(e["total"]), cell(e["failures"])});
    }
  }

  if (!r.finetune.is_null()) {
    auto out = emit.open("finetune.csv");
    csv::write_row(out, {"n_epochs", "learning_rate_multiplier", "job_id", "state", "fine_tuned_model_id", "accuracy"});
    for (const auto& j : r.finetune["jobs"]) {
      csv::write_row(out, {cell(j["n_epochs"]), text::fixed(j["learning_rate_multiplier"].get<double>(), 2),
                           cell(j["job_id"]), cell(j["state"]), cell(j["fine_tuned_model_id"]), cell(j["accuracy"])});
    }
  }

  if (!r.rfe.is_null()) {
    {
      auto out = emit.open("sweep_curves.csv");
      csv::write_row(out, {"classifier", "k", "accuracy"});
      for (const auto& c : r.rfe["curves"]) {
        for (const auto& p : c["sweep"]) csv::write_row(out, {cell(c["classifier"]), cell(p["k"]), cell(p["accuracy"])});
      }
    }
    auto out = emit.open("importance.csv");
    std::vector<std::string> header{"feature"};
    if (!r.importance.empty()) {
      for (const auto& e : r.importance.front()["models"]) {
        const auto m = e["model"].get<std::string>();
        header.insert(header.end(), {m + "_rank", m + "_importance", m + "_selected"});
      }
    }
    csv::write_row(out, header);
    for (const auto& row : r.importance) {
      std::vector<std::string> cells{cell(row["feature"])};
      for (const auto& e : row["models"]) {
        cells.push_back(cell(e["rank"]));
        cells.push_back(text::fixed(e["importance"].get<double>(), 6));
        cells.push_back(e["selected"].get<bool>() ? "1" : "0");
      }
      csv::write_row(out, cells);
    }
  }

  const auto sources = prediction_sources(r);
  if (!sources.empty()) {
    std::map<std::string, std::string> truth;
    for (const auto& t : r.dataset["test_truth"]) truth[t["id"].get<std::string>()] = t["label"].dump();
    {
      auto out = emit.open("confusion_matrices.csv");
      csv::write_row(out, {"source", "truth", "pred_1", "pred_2", "pred_3", "failures"});
      for (const auto& s : sources) {
        const auto& counts = (*s.confusion)["counts"];
        for (std::size_t t = 0; t < 3; ++t) {
          csv::write_row(out, {s.name, std::to_string(t + 1), cell(counts[t][0]), cell(counts[t][1]),
                               cell(counts[t][2]), t == 0 ? cell((*s.confusion)["failures"]) : ""});
        }
      }
    }
    auto out = emit.open("predictions.csv");
    csv::write_row(out, {"source", "record_id", "truth", "prediction"});
    for (const auto& s : sources) {
      for (std::size_t i = 0; i < s.ids.size(); ++i) {
        csv::write_row(out, {s.name, s.ids[i], truth[s.ids[i]], label_cell((*s.predictions)[i])});
      }
    }
  }

  if (options.plot) {
    if (!r.rfe.is_null()) {
      auto out = emit.open("sweep_curves.svg");
      svg_sweep(out, r.rfe["curves"]);
    }
    if (!r.classifiers.is_null()) {
      auto out = emit.open("classifier_accuracy.svg");
      svg_bars(out, r.classifiers["results"]);
    }
  }
  return emit.written();
}

}  // namespace empathy::bench
