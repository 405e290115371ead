#pragma once

// Numerical library: media, band structures, spectral data, dynamics and
// scattering. Scene files and the CLI live in scene.hpp and cli.hpp.

#include "core.hpp"
#include "quadrature.hpp"
#include "media.hpp"
#include "oracle.hpp"
#include "bands.hpp"
#include "state.hpp"
#include "bloch_transform.hpp"
#include "dynamics.hpp"
#include "spectral.hpp"
#include "scattering.hpp"
