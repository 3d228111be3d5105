#pragma once

#include "wcluster/barycenter.hpp"
#include "wcluster/callcenter.hpp"
#include "wcluster/clustering.hpp"
#include "wcluster/common.hpp"
#include "wcluster/distribution.hpp"
#include "wcluster/exact_transport.hpp"
#include "wcluster/io.hpp"
#include "wcluster/kde.hpp"
#include "wcluster/monitoring.hpp"
#include "wcluster/rng.hpp"
#include "wcluster/sinkhorn.hpp"
#include "wcluster/studies.hpp"
#include "wcluster/thread_pool.hpp"
