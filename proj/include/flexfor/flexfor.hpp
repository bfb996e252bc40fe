#pragma once

#include "flexfor/error.hpp"
#include "flexfor/netmodel.hpp"
#include "flexfor/pflow.hpp"
#include "flexfor/nlp.hpp"
#include "flexfor/opf.hpp"
#include "flexfor/sampling.hpp"
#include "flexfor/fitting.hpp"
#include "flexfor/coordination.hpp"
#include "flexfor/evaluation.hpp"
#include "flexfor/caseio.hpp"
