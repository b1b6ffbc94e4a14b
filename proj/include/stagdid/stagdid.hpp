#pragma once

#include "stagdid/aggregate.hpp"
#include "stagdid/attgt.hpp"
#include "stagdid/cli.hpp"
#include "stagdid/csv.hpp"
#include "stagdid/dgp.hpp"
#include "stagdid/dominance.hpp"
#include "stagdid/error.hpp"
#include "stagdid/mboot.hpp"
#include "stagdid/panel.hpp"
#include "stagdid/pretest.hpp"
#include "stagdid/propensity.hpp"
#include "stagdid/report.hpp"
#include "stagdid/simulate.hpp"
#include "stagdid/svg.hpp"
