#ifndef HDSQP_HDSQP_HPP
#define HDSQP_HDSQP_HPP

#include "hdsqp/case_io.hpp"
#include "hdsqp/central.hpp"
#include "hdsqp/comm.hpp"
#include "hdsqp/condense.hpp"
#include "hdsqp/driver.hpp"
#include "hdsqp/error.hpp"
#include "hdsqp/hdqp.hpp"
#include "hdsqp/network.hpp"
#include "hdsqp/partition.hpp"
#include "hdsqp/residual.hpp"
#include "hdsqp/trace.hpp"

#endif
