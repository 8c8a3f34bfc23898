#pragma once

#include "softarm/common.hpp"
#include "softarm/rbfnn.hpp"
#include "softarm/rbfnn_io.hpp"
#include "softarm/chain.hpp"
#include "softarm/controller.hpp"
#include "softarm/plant.hpp"
#include "softarm/trajgen.hpp"
#include "softarm/csv.hpp"
#include "softarm/sysid.hpp"
#include "softarm/monitor.hpp"
#include "softarm/concurrency.hpp"
#include "softarm/config.hpp"
#include "softarm/experiment.hpp"
