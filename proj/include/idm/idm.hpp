#pragma once

#include "idm/align.hpp"
#include "idm/bandwidth.hpp"
#include "idm/chart.hpp"
#include "idm/common.hpp"
#include "idm/derivative.hpp"
#include "idm/fixtures.hpp"
#include "idm/flow.hpp"
#include "idm/io.hpp"
#include "idm/kernel.hpp"
#include "idm/knn.hpp"
#include "idm/lanczos.hpp"
#include "idm/nystrom.hpp"
#include "idm/pipeline.hpp"
#include "idm/spectral.hpp"
#include "idm/types.hpp"
