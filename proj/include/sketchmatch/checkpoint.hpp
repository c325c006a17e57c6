#pragma once

#include <string>

#include "sketchmatch/params.hpp"

namespace sketchmatch {

// Weight checkpoint: a flat container of named arrays with shape headers,
// values stored as little-endian 64-bit floats regardless of the build's
// real type. A text manifest of names is written alongside as
// `<path>.manifest`. Exact byte layout is documented in docs/FORMATS.md.
void save_checkpoint(const ParamStore& params, const std::string& path);

// Loads arrays into the already-constructed parameters of `params`; every
// stored name must exist with a matching shape and vice versa.
void load_checkpoint(ParamStore& params, const std::string& path);

}  // namespace sketchmatch
