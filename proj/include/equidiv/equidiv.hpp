#pragma once

#include "equidiv/core.hpp"
#include "equidiv/stats.hpp"
#include "equidiv/dynsys.hpp"
#include "equidiv/systems.hpp"
#include "equidiv/frames.hpp"
#include "equidiv/equivdiv.hpp"
#include "equidiv/shadow.hpp"
#include "equidiv/response.hpp"
#include "equidiv/oracle.hpp"
#include "equidiv/config.hpp"
#include "equidiv/checks.hpp"
#include "equidiv/run.hpp"
