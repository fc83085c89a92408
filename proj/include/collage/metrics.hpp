#pragma once

#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include "collage/image.hpp"
#include "collage/plan_model.hpp"
#include "collage/prompt_store.hpp"
#include "collage/providers.hpp"
#include "collage/structured_output.hpp"

namespace collage::metrics {

// ---------------------------------------------------------------------------
// Structural similarity between two grids: embed each panel, form the matrix
// of pairwise cosine similarities, center both matrices, and take the
// Frobenius cosine between them. 1 means the two grids relate their panels
// to each other in exactly the same way, whatever the panels depict.

// Dense symmetric matrix of pairwise panel similarities, unit diagonal.
struct RelationMatrix {
  int n = 0;
  std::vector<double> values;  // row-major n*n

  double at(int i, int j) const { return values[static_cast<std::size_t>(i) * n + j]; }
  double& at(int i, int j) { return values[static_cast<std::size_t>(i) * n + j]; }

  static RelationMatrix zeros(int n);
};

model::json to_json(const RelationMatrix& m);

// Cuts a collage into rows*cols equal crops, ordered like layout.panel_order.
// Throws DimensionError when the canvas does not divide evenly.
std::vector<Image> split_grid(const Image& collage, const model::GridLayout& layout);

// Unit-normalizes raw feature vectors and forms all pairwise dot products.
// Throws DegenerateEmbedding for a feature vector with vanishing norm.
RelationMatrix relation_from_embeddings(const std::vector<std::vector<double>>& features);

// Embeds every panel and builds its relation matrix. Needs >= 2 panels.
RelationMatrix relation_matrix(const std::vector<Image>& panels, providers::EmbedProvider& embed);

// Centered alignment of two relation structures, in [-1, 1] and non-negative
// for matrices built from real embeddings. Throws DegenerateStructure when
// either matrix centers to zero (all panels alike), PreconditionError on a
// size mismatch.
double cka(const RelationMatrix& r_ref, const RelationMatrix& r_gen);

// ---------------------------------------------------------------------------
// Rubric scoring through a multimodal judge.

// Axis and sub-dimension order used by every report table.
const std::vector<std::pair<std::string, std::vector<std::string>>>& rubric_column_order();

// Scores one collage on the full rubric. The judge sees the whole grid plus
// every panel crop. Repairs malformed responses up to the repair budget.
model::RubricScores score_visual_quality(const Image& collage, const model::GridLayout& layout,
                                         providers::ChatProvider& chat, const PromptStore& prompts,
                                         const agents::RepairConfig& repair = {});

// Judges how well a generated grid re-instantiates a reference grid's
// structure for a new product. Both full grids are attached uncropped; the
// judge must weigh whole-grid logic, never panel crops.
model::TransferReport score_reference_transfer(const Image& reference, const Image& generated,
                                               const model::GridLayout& layout,
                                               providers::ChatProvider& chat,
                                               const PromptStore& prompts,
                                               const agents::RepairConfig& repair = {});

// ---------------------------------------------------------------------------
// Batch evaluation over a manifest of generated collages.

struct EvalItem {
  std::string item;
  std::string group;
  model::RunMode mode = model::RunMode::creation;
  std::filesystem::path collage;
  std::optional<std::filesystem::path> reference;
  std::optional<std::filesystem::path> packshot;
  model::GridLayout layout = model::GridLayout::standard(2, 2);
};

struct Manifest {
  std::vector<EvalItem> items;
  // item id -> score judged by some external model, merged into the tables
  // verbatim, never computed here.
  std::map<std::string, double> external_scores;
};

// Reads a manifest document. Relative paths resolve against the manifest's
// directory. Throws IoError / ParseError / SchemaError.
Manifest load_manifest(const std::filesystem::path& path);

struct EvalRow {
  std::string item;
  std::string group;
  bool reference_mode = false;
  std::optional<model::RubricScores> quality;
  std::optional<model::TransferReport> transfer;
  std::optional<double> cka_value;
  std::optional<double> external_score;
  std::optional<std::string> error;
};

struct EvalOptions {
  int workers = 4;
  agents::RepairConfig repair;
};

// Evaluates every item, fanning out up to options.workers at a time. A
// failing item becomes a row carrying its error; the batch never aborts.
std::vector<EvalRow> batch_evaluate(const Manifest& manifest, providers::ChatProvider& chat,
                                    providers::EmbedProvider& embed, const PromptStore& prompts,
                                    const EvalOptions& options = {});

// Fixed-order CSV: group, item, the eleven rubric columns, then
// transfer.grid_plan/narrative_logic/product_fit and cka when any row ran in
// reference mode, then external_score when any row has one. Item rows in
// manifest order, then one mean row per group (item = "mean") averaging the
// numeric columns over that group's clean rows.
std::string results_csv(const std::vector<EvalRow>& rows);

model::json results_json(const std::vector<EvalRow>& rows);

// Writes results.json and results.csv into out_dir. Returns false when any
// row carries an error.
bool write_results(const std::vector<EvalRow>& rows, const std::filesystem::path& out_dir);

}  // namespace collage::metrics
