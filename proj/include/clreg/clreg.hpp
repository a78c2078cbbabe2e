#pragma once

// Umbrella header.

#include "clreg/analysis.hpp"
#include "clreg/config.hpp"
#include "clreg/continual.hpp"
#include "clreg/data.hpp"
#include "clreg/error.hpp"
#include "clreg/idx.hpp"
#include "clreg/importance.hpp"
#include "clreg/linalg.hpp"
#include "clreg/nn.hpp"
#include "clreg/online.hpp"
#include "clreg/optim.hpp"
#include "clreg/posthoc.hpp"
#include "clreg/report.hpp"
#include "clreg/rng.hpp"
