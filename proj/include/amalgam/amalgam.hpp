#pragma once

// Convenience include for the whole library. JSON interchange lives in
// json_io.hpp and is not pulled in here because it depends on a vendored
// header that library consumers may not want on their include path.

#include "amalgam/core.hpp"
#include "amalgam/rng.hpp"
#include "amalgam/nc_partitions.hpp"
#include "amalgam/algebra.hpp"
#include "amalgam/series.hpp"
#include "amalgam/canonical.hpp"
#include "amalgam/freeness.hpp"
#include "amalgam/band_matrix.hpp"
