#include "collage/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <set>
#include <sstream>
#include <thread>

#include "collage/errors.hpp"
#include "collage/util.hpp"

namespace collage::metrics {

using model::json;

// ---------------------------------------------------------------------------
// Relation matrices

RelationMatrix RelationMatrix::zeros(int n) {
  RelationMatrix m;
  m.n = n;
  m.values.assign(static_cast<std::size_t>(n) * n, 0.0);
  return m;
}

json to_json(const RelationMatrix& m) {
  json rows = json::array();
  for (int i = 0; i < m.n; ++i) {
    json row = json::array();
    for (int j = 0; j < m.n; ++j) row.push_back(m.at(i, j));
    rows.push_back(row);
  }
  return json{{"n", m.n}, {"values", rows}};
}

std::vector<Image> split_grid(const Image& collage, const model::GridLayout& layout) {
  model::ValidationReport report = model::validate(layout);
  if (!report.ok()) throw PreconditionError("split_grid: " + report.joined());
  if (collage.empty()) throw PreconditionError("split_grid: empty image");
  if (collage.width % layout.cols != 0 || collage.height % layout.rows != 0) {
    throw DimensionError("canvas " + std::to_string(collage.width) + "x" +
                         std::to_string(collage.height) + " does not divide into a " +
                         std::to_string(layout.rows) + "x" + std::to_string(layout.cols) +
                         " grid");
  }
  int panel_w = collage.width / layout.cols;
  int panel_h = collage.height / layout.rows;
  std::vector<Image> panels;
  panels.reserve(static_cast<std::size_t>(layout.panel_count()));
  for (int r = 0; r < layout.rows; ++r) {
    for (int c = 0; c < layout.cols; ++c) {
      panels.push_back(crop(collage, c * panel_w, r * panel_h, panel_w, panel_h));
    }
  }
  return panels;
}

RelationMatrix relation_from_embeddings(const std::vector<std::vector<double>>& features) {
  int n = static_cast<int>(features.size());
  if (n < 2) throw PreconditionError("a relation matrix needs at least two embeddings");
  std::size_t dim = features[0].size();
  std::vector<std::vector<double>> unit(features.size());
  for (int i = 0; i < n; ++i) {
    const std::vector<double>& f = features[static_cast<std::size_t>(i)];
    if (f.size() != dim) {
      throw DimensionMismatch("embedding " + std::to_string(i) + " has dimension " +
                              std::to_string(f.size()) + ", expected " + std::to_string(dim));
    }
    double sq = 0.0;
    for (double v : f) sq += v * v;
    double norm = std::sqrt(sq);
    if (!(norm >= 1e-12)) {
      throw DegenerateEmbedding("embedding " + std::to_string(i) + " has vanishing norm");
    }
    std::vector<double>& e = unit[static_cast<std::size_t>(i)];
    e.resize(dim);
    for (std::size_t k = 0; k < dim; ++k) e[k] = f[k] / norm;
  }
  RelationMatrix m = RelationMatrix::zeros(n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        dot += unit[static_cast<std::size_t>(i)][k] * unit[static_cast<std::size_t>(j)][k];
      }
      m.at(i, j) = dot;
      m.at(j, i) = dot;
    }
  }
  return m;
}

RelationMatrix relation_matrix(const std::vector<Image>& panels,
                               providers::EmbedProvider& embed) {
  if (panels.size() < 2) throw PreconditionError("a relation matrix needs at least two panels");
  std::vector<std::vector<double>> features;
  features.reserve(panels.size());
  for (const Image& panel : panels) features.push_back(embed.embed_image(panel).values);
  return relation_from_embeddings(features);
}

double cka(const RelationMatrix& r_ref, const RelationMatrix& r_gen) {
  if (r_ref.n != r_gen.n) {
    throw PreconditionError("relation matrices disagree on panel count: " +
                            std::to_string(r_ref.n) + " vs " + std::to_string(r_gen.n));
  }
  int n = r_ref.n;
  if (n < 2) throw PreconditionError("alignment needs at least a 2x2 relation matrix");

  // Center: subtract row and column means, add back the grand mean.
  auto centered = [n](const RelationMatrix& m) {
    std::vector<double> row_mean(static_cast<std::size_t>(n), 0.0);
    std::vector<double> col_mean(static_cast<std::size_t>(n), 0.0);
    double grand = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        double v = m.at(i, j);
        row_mean[static_cast<std::size_t>(i)] += v;
        col_mean[static_cast<std::size_t>(j)] += v;
        grand += v;
      }
    }
    for (int i = 0; i < n; ++i) {
      row_mean[static_cast<std::size_t>(i)] /= n;
      col_mean[static_cast<std::size_t>(i)] /= n;
    }
    grand /= static_cast<double>(n) * n;
    RelationMatrix out = RelationMatrix::zeros(n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        out.at(i, j) = m.at(i, j) - row_mean[static_cast<std::size_t>(i)] -
                       col_mean[static_cast<std::size_t>(j)] + grand;
      }
    }
    return out;
  };

  RelationMatrix a = centered(r_ref);
  RelationMatrix b = centered(r_gen);
  double aa = 0.0;
  double bb = 0.0;
  double ab = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      aa += a.at(i, j) * a.at(i, j);
      bb += b.at(i, j) * b.at(i, j);
      ab += a.at(i, j) * b.at(i, j);
    }
  }
  double norm_a = std::sqrt(aa);
  double norm_b = std::sqrt(bb);
  if (norm_a < 1e-12 || norm_b < 1e-12) {
    throw DegenerateStructure(
        "a relation matrix centers to zero; identical panels carry no structure to compare");
  }
  return ab / (norm_a * norm_b);
}

// ---------------------------------------------------------------------------
// Rubric scoring

const std::vector<std::pair<std::string, std::vector<std::string>>>& rubric_column_order() {
  static const std::vector<std::pair<std::string, std::vector<std::string>>> order = {
      {"aesthetics",
       {"composition_hierarchy", "lighting_rendering", "color_harmony", "grid_balance"}},
      {"richness", {"function_coverage", "information_density", "product_relevance"}},
      {"coherence",
       {"product_identity_consistency", "product_centric_narrative", "style_tone_consistency",
        "world_campaign_cohesion"}},
  };
  return order;
}

model::RubricScores score_visual_quality(const Image& collage, const model::GridLayout& layout,
                                         providers::ChatProvider& chat, const PromptStore& prompts,
                                         const agents::RepairConfig& repair) {
  std::vector<Image> panels = split_grid(collage, layout);
  std::string text = prompts.render(
      "visual_quality", {{"layout", std::to_string(layout.rows) + "x" + std::to_string(layout.cols)},
                         {"positions", util::join(layout.panel_order, ", ")}});
  providers::ChatRequest request;
  request.system_prompt = "You are a meticulous judge of product collage imagery.";
  request.user_parts.push_back(providers::ChatPart::make_text(text));
  request.user_parts.push_back(providers::ChatPart::make_image(collage));
  for (const Image& panel : panels) {
    request.user_parts.push_back(providers::ChatPart::make_image(panel));
  }
  request.format = providers::ResponseFormat::json_object;
  request.temperature = 0.0;

  model::RubricScores scores;
  auto accept = [&scores](const std::string& raw) {
    return agents::violations_of([&]() {
      scores = model::rubric_from_json(model::parse_json_text(raw));
      model::ValidationReport report = model::validate(scores);
      if (!report.ok()) throw SchemaError("rubric: " + report.joined(), report.violations);
    });
  };
  agents::run_structured(chat, prompts, request, accept, repair);
  return scores;
}

model::TransferReport score_reference_transfer(const Image& reference, const Image& generated,
                                               const model::GridLayout& layout,
                                               providers::ChatProvider& chat,
                                               const PromptStore& prompts,
                                               const agents::RepairConfig& repair) {
  if (reference.empty() || generated.empty()) {
    throw PreconditionError("transfer scoring needs both grids");
  }
  std::string text = prompts.render(
      "reference_transfer",
      {{"layout", std::to_string(layout.rows) + "x" + std::to_string(layout.cols)},
       {"positions", util::join(layout.panel_order, ", ")}});
  providers::ChatRequest request;
  request.system_prompt = "You are a meticulous judge of product collage imagery.";
  request.user_parts.push_back(providers::ChatPart::make_text(text));
  request.user_parts.push_back(providers::ChatPart::make_image(reference));
  request.user_parts.push_back(providers::ChatPart::make_image(generated));
  request.format = providers::ResponseFormat::json_object;
  request.temperature = 0.0;

  model::TransferReport report;
  auto accept = [&report, &layout](const std::string& raw) {
    return agents::violations_of([&]() {
      report = model::transfer_report_from_json(model::parse_json_text(raw));
      model::ValidationReport check = model::validate(report, layout);
      if (!check.ok()) throw SchemaError("transfer report: " + check.joined(), check.violations);
    });
  };
  agents::run_structured(chat, prompts, request, accept, repair);
  return report;
}

// ---------------------------------------------------------------------------
// Manifests

namespace {

std::filesystem::path resolve_path(const std::filesystem::path& base, const std::string& raw) {
  std::filesystem::path p(raw);
  return p.is_absolute() ? p : base / p;
}

}  // namespace

Manifest load_manifest(const std::filesystem::path& path) {
  json doc = model::parse_json_text(util::read_text_file(path));
  std::filesystem::path base = path.parent_path();
  std::vector<std::string> violations;
  Manifest manifest;
  if (!doc.is_object() || !doc.contains("items") || !doc["items"].is_array()) {
    throw SchemaError("manifest must be an object with an items array",
                      {"manifest must be an object with an items array"});
  }
  std::set<std::string> seen;
  int index = 0;
  for (const json& entry : doc["items"]) {
    std::string at = "items[" + std::to_string(index++) + "]";
    if (!entry.is_object()) {
      violations.push_back(at + ": not an object");
      continue;
    }
    EvalItem item;
    item.item = entry.value("item", "");
    item.group = entry.value("group", "");
    if (item.item.empty()) violations.push_back(at + ": missing item id");
    if (item.group.empty()) violations.push_back(at + ": missing group");
    if (!seen.insert(item.item).second) {
      violations.push_back(at + ": duplicate item id \"" + item.item + "\"");
    }
    auto mode = model::run_mode_from_string(entry.value("mode", "creation"));
    if (!mode) {
      violations.push_back(at + ": unknown mode \"" + entry.value("mode", "") + "\"");
    } else {
      item.mode = *mode;
    }
    std::string collage = entry.value("collage", "");
    if (collage.empty()) {
      violations.push_back(at + ": missing collage path");
    } else {
      item.collage = resolve_path(base, collage);
    }
    if (entry.contains("reference")) {
      item.reference = resolve_path(base, entry["reference"].get<std::string>());
    }
    if (entry.contains("packshot")) {
      item.packshot = resolve_path(base, entry["packshot"].get<std::string>());
    }
    if (mode && *mode == model::RunMode::reference && !item.reference) {
      violations.push_back(at + ": reference mode needs a reference path");
    }
    std::string spec = entry.value("layout", "2x2");
    auto layout = model::GridLayout::parse_spec(spec);
    if (!layout) {
      violations.push_back(at + ": bad layout \"" + spec + "\"");
    } else {
      item.layout = *layout;
    }
    manifest.items.push_back(std::move(item));
  }
  if (doc.contains("external_scores")) {
    if (!doc["external_scores"].is_string()) {
      violations.push_back("external_scores must be a path");
    } else {
      std::filesystem::path sidecar = resolve_path(base, doc["external_scores"].get<std::string>());
      json scores = model::parse_json_text(util::read_text_file(sidecar));
      if (!scores.is_object()) {
        violations.push_back("external scores sidecar must map item ids to numbers");
      } else {
        for (const auto& [key, value] : scores.items()) {
          if (!value.is_number()) {
            violations.push_back("external score for \"" + key + "\" is not a number");
          } else {
            manifest.external_scores[key] = value.get<double>();
          }
        }
      }
    }
  }
  if (!violations.empty()) {
    throw SchemaError("manifest: " + util::join(violations, "; "), violations);
  }
  return manifest;
}

// ---------------------------------------------------------------------------
// Batch evaluation

namespace {

EvalRow evaluate_item(const EvalItem& item, providers::ChatProvider& chat,
                      providers::EmbedProvider& embed, const PromptStore& prompts,
                      const agents::RepairConfig& repair) {
  EvalRow row;
  row.item = item.item;
  row.group = item.group;
  row.reference_mode = item.mode == model::RunMode::reference;
  try {
    Image collage = load_image(item.collage);
    row.quality = score_visual_quality(collage, item.layout, chat, prompts, repair);
    if (row.reference_mode) {
      Image reference = load_image(*item.reference);
      row.transfer = score_reference_transfer(reference, collage, item.layout, chat, prompts, repair);
      RelationMatrix r_ref = relation_matrix(split_grid(reference, item.layout), embed);
      RelationMatrix r_gen = relation_matrix(split_grid(collage, item.layout), embed);
      row.cka_value = cka(r_ref, r_gen);
    }
  } catch (const std::exception& e) {
    row.quality.reset();
    row.transfer.reset();
    row.cka_value.reset();
    row.error = e.what();
  }
  return row;
}

}  // namespace

std::vector<EvalRow> batch_evaluate(const Manifest& manifest, providers::ChatProvider& chat,
                                    providers::EmbedProvider& embed, const PromptStore& prompts,
                                    const EvalOptions& options) {
  std::vector<EvalRow> rows(manifest.items.size());
  if (manifest.items.empty()) return rows;
  int workers = std::max(1, std::min<int>(options.workers,
                                          static_cast<int>(manifest.items.size())));
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= manifest.items.size()) return;
      rows[i] = evaluate_item(manifest.items[i], chat, embed, prompts, options.repair);
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto it = manifest.external_scores.find(rows[i].item);
    if (it != manifest.external_scores.end()) rows[i].external_score = it->second;
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Result tables

namespace {

std::string csv_escape(const std::string& value) {
  if (value.find_first_of(",\"\n") == std::string::npos) return value;
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

struct ColumnSet {
  std::vector<std::string> names;  // after group,item
  bool with_transfer = false;
  bool with_external = false;
};

ColumnSet columns_for(const std::vector<EvalRow>& rows) {
  ColumnSet cols;
  for (const EvalRow& row : rows) {
    if (row.reference_mode) cols.with_transfer = true;
    if (row.external_score) cols.with_external = true;
  }
  for (const auto& [axis, subs] : rubric_column_order()) {
    for (const std::string& sub : subs) cols.names.push_back(axis + "." + sub);
  }
  if (cols.with_transfer) {
    cols.names.push_back("transfer.grid_plan");
    cols.names.push_back("transfer.narrative_logic");
    cols.names.push_back("transfer.product_fit");
    cols.names.push_back("cka");
  }
  if (cols.with_external) cols.names.push_back("external_score");
  return cols;
}

std::optional<double> cell_value(const EvalRow& row, const std::string& column) {
  if (column == "cka") return row.cka_value;
  if (column == "external_score") return row.external_score;
  if (util::starts_with(column, "transfer.")) {
    if (!row.transfer) return std::nullopt;
    std::string field = column.substr(9);
    if (field == "grid_plan") return static_cast<double>(row.transfer->grid_plan);
    if (field == "narrative_logic") return static_cast<double>(row.transfer->narrative_logic);
    if (field == "product_fit") return static_cast<double>(row.transfer->product_fit);
    return std::nullopt;
  }
  if (!row.quality) return std::nullopt;
  std::size_t dot = column.find('.');
  std::string axis = column.substr(0, dot);
  std::string sub = column.substr(dot + 1);
  auto axis_it = row.quality->axes.find(axis);
  if (axis_it == row.quality->axes.end()) return std::nullopt;
  auto sub_it = axis_it->second.find(sub);
  if (sub_it == axis_it->second.end()) return std::nullopt;
  return static_cast<double>(sub_it->second.score);
}

std::string format_cell(double v) {
  // Integral scores print as integers; means and cka keep their fraction.
  if (v == std::floor(v) && std::abs(v) < 1e15) {
    return std::to_string(static_cast<long long>(v));
  }
  return util::format_double(v);
}

std::vector<std::string> group_order(const std::vector<EvalRow>& rows) {
  std::vector<std::string> order;
  for (const EvalRow& row : rows) {
    if (std::find(order.begin(), order.end(), row.group) == order.end()) {
      order.push_back(row.group);
    }
  }
  return order;
}

std::map<std::string, std::map<std::string, double>> group_means(
    const std::vector<EvalRow>& rows, const ColumnSet& cols) {
  std::map<std::string, std::map<std::string, double>> means;
  for (const std::string& group : group_order(rows)) {
    for (const std::string& column : cols.names) {
      double sum = 0.0;
      int count = 0;
      for (const EvalRow& row : rows) {
        if (row.group != group) continue;
        std::optional<double> v = cell_value(row, column);
        if (v) {
          sum += *v;
          ++count;
        }
      }
      if (count > 0) means[group][column] = sum / count;
    }
  }
  return means;
}

}  // namespace

std::string results_csv(const std::vector<EvalRow>& rows) {
  ColumnSet cols = columns_for(rows);
  std::ostringstream out;
  out << "group,item";
  for (const std::string& name : cols.names) out << "," << name;
  out << "\n";
  for (const EvalRow& row : rows) {
    out << csv_escape(row.group) << "," << csv_escape(row.item);
    for (const std::string& column : cols.names) {
      out << ",";
      std::optional<double> v = cell_value(row, column);
      if (v) out << format_cell(*v);
    }
    out << "\n";
  }
  auto means = group_means(rows, cols);
  for (const std::string& group : group_order(rows)) {
    out << csv_escape(group) << ",mean";
    for (const std::string& column : cols.names) {
      out << ",";
      auto git = means.find(group);
      if (git != means.end()) {
        auto cit = git->second.find(column);
        if (cit != git->second.end()) out << format_cell(cit->second);
      }
    }
    out << "\n";
  }
  return out.str();
}

json results_json(const std::vector<EvalRow>& rows) {
  ColumnSet cols = columns_for(rows);
  json out_rows = json::array();
  for (const EvalRow& row : rows) {
    json j{{"item", row.item}, {"group", row.group}, {"mode", row.reference_mode ? "reference" : "creation"}};
    if (row.quality) j["quality"] = model::to_json(*row.quality);
    if (row.transfer) j["transfer"] = model::to_json(*row.transfer);
    if (row.cka_value) j["cka"] = *row.cka_value;
    if (row.external_score) j["external_score"] = *row.external_score;
    if (row.error) j["error"] = *row.error;
    out_rows.push_back(std::move(j));
  }
  json means = json::object();
  for (const auto& [group, columns] : group_means(rows, cols)) {
    json g = json::object();
    for (const auto& [column, value] : columns) g[column] = value;
    means[group] = std::move(g);
  }
  return json{{"rows", out_rows}, {"means", means}};
}

bool write_results(const std::vector<EvalRow>& rows, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  util::atomic_write_file(out_dir / "results.json", model::serialize_canonical(results_json(rows)));
  util::atomic_write_file(out_dir / "results.csv", results_csv(rows));
  for (const EvalRow& row : rows) {
    if (row.error) return false;
  }
  return true;
}

}  // namespace collage::metrics
