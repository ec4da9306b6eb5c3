#ifndef GAMMKIT_GAMMKIT_HPP
#define GAMMKIT_GAMMKIT_HPP

// Umbrella header for the library; the command-line front end lives in cli.hpp.

#include "gammkit/data.hpp"
#include "gammkit/basis.hpp"
#include "gammkit/model.hpp"
#include "gammkit/design.hpp"
#include "gammkit/pls.hpp"
#include "gammkit/fit.hpp"
#include "gammkit/inference.hpp"
#include "gammkit/simulate.hpp"
#include "gammkit/diagnostics.hpp"

#endif  // GAMMKIT_GAMMKIT_HPP
