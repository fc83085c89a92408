#include "collage/product_input.hpp"

#include <algorithm>

#include "collage/errors.hpp"
#include "collage/util.hpp"

namespace collage {

void check_product_input(const ProductInput& input) {
  if (util::trim(input.name).empty()) {
    throw PreconditionError("product input needs a name");
  }
  if (input.packshot.empty()) {
    throw PreconditionError("product input needs a packshot");
  }
  if (std::min(input.packshot.width, input.packshot.height) < 64) {
    throw PreconditionError("packshot must be at least 64px on its shorter side");
  }
  if (input.reference && input.reference->empty()) {
    throw PreconditionError("reference image, when given, must not be empty");
  }
}

model::json input_meta_json(const ProductInput& input, model::RunMode mode) {
  model::json j{{"name", input.name},
                {"user_intent", input.user_intent},
                {"mode", model::to_string(mode)},
                {"packshot_digest", image_digest(input.packshot)}};
  if (input.reference) j["reference_digest"] = image_digest(*input.reference);
  return j;
}

}  // namespace collage
