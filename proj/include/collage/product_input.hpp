#pragma once

#include <optional>
#include <string>

#include "collage/image.hpp"
#include "collage/plan_model.hpp"

namespace collage {

// What the user hands the pipeline: a clean packshot, a product name, and
// optionally an intent line plus a reference collage to transfer from.
struct ProductInput {
  std::string name;
  std::string user_intent;  // empty means the user gave none
  Image packshot;
  std::optional<Image> reference;
};

// Throws PreconditionError. The packshot must be present and at least 64px
// on its shorter side; the name must be non-empty.
void check_product_input(const ProductInput& input);

// The textual half of the input, for persistence. Images are saved as files.
model::json input_meta_json(const ProductInput& input, model::RunMode mode);

}  // namespace collage
