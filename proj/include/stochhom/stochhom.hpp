#pragma once

// Convenience umbrella: the full library.

#include "stochhom/errors.hpp"
#include "stochhom/fem.hpp"
#include "stochhom/field.hpp"
#include "stochhom/grid.hpp"
#include "stochhom/harness.hpp"
#include "stochhom/lod.hpp"
#include "stochhom/parallel.hpp"
#include "stochhom/rng.hpp"
#include "stochhom/slod.hpp"
#include "stochhom/version.hpp"
