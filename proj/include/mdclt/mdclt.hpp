#pragma once

#include "mdclt/ar_process.hpp"
#include "mdclt/config.hpp"
#include "mdclt/diagnostics.hpp"
#include "mdclt/error.hpp"
#include "mdclt/innovations.hpp"
#include "mdclt/matrix.hpp"
#include "mdclt/parallel.hpp"
#include "mdclt/report.hpp"
#include "mdclt/rng.hpp"
#include "mdclt/stable_test.hpp"
#include "mdclt/version.hpp"
