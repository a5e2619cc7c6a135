#pragma once

#include <string>

#include "dfopf/model.hpp"

namespace dfopf {

// Load a feeder description from JSON (see docs/feeder_format.md), convert
// all physical quantities to per-unit on the declared bases, relabel nodes
// topologically, and validate. Throws ParseError for malformed JSON /
// missing or mistyped fields, ValidationError for rule violations (cyclic
// topology, duplicate ids, series length mismatches, infeasible EV
// itineraries, ...), IoError if the file cannot be read.
FeederModel load_feeder(const std::string& path);

// Same, from an in-memory JSON string ("source" names it in error messages).
FeederModel parse_feeder(const std::string& json_text, const std::string& source);

}  // namespace dfopf
