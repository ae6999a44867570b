#pragma once

#include "cvpurify/core.hpp"
#include "cvpurify/fidelity.hpp"
#include "cvpurify/harness.hpp"
#include "cvpurify/protocol.hpp"
#include "cvpurify/random.hpp"
#include "cvpurify/sampler.hpp"
#include "cvpurify/spectrum.hpp"
#include "cvpurify/version.hpp"
