#pragma once

#include "qfl/ansatz.hpp"
#include "qfl/cobyla.hpp"
#include "qfl/data.hpp"
#include "qfl/encoding.hpp"
#include "qfl/error.hpp"
#include "qfl/federation.hpp"
#include "qfl/model.hpp"
#include "qfl/qstate.hpp"
