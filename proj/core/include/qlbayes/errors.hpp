#pragma once

#include <stdexcept>
#include <string>

namespace qlbayes {

// Base class for all domain errors raised by the library.  The CLI maps
// these to exit code 1; usage_error (bad flags, malformed config) maps to 2.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct usage_error : error {
  using error::error;
};

// Config-file problems carry the offending line when known.
struct config_error : usage_error {
  explicit config_error(const std::string& msg, int line = 0)
      : usage_error(line > 0 ? msg + " (line " + std::to_string(line) + ")" : msg),
        line_number(line) {}
  int line_number = 0;
};

// Model evaluation produced a non-finite value or inconsistent dimensions.
struct model_error : error {
  using error::error;
};

// Diffusion matrix B = b b^T not positive definite where it must be.
struct ellipticity_error : model_error {
  using model_error::model_error;
};

// Simulated state left the finite range; carries the fine-step index.
struct explosion_error : error {
  explosion_error(const std::string& msg, long step)
      : error(msg + " at step " + std::to_string(step)), step_index(step) {}
  long step_index = 0;
};

// Stationary density failed to normalize on the probed support sequence.
struct not_ergodic_error : error {
  using error::error;
};

// Information matrix singular / identifiability functional misbehaved.
struct identifiability_error : error {
  using error::error;
};

// Loss callback violated the loss-class contract (negative value, failed
// separation condition, ...).
struct loss_error : error {
  using error::error;
};

// Parameter left its box where the operation requires it inside.
struct box_error : error {
  using error::error;
};

// Optimizer failed on all starts.
struct optimization_error : error {
  using error::error;
};

}  // namespace qlbayes
