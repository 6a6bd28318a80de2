#pragma once

#include "seqpen/analytic_qp.hpp"
#include "seqpen/dense_net.hpp"
#include "seqpen/diagnostics.hpp"
#include "seqpen/enc_dec_task.hpp"
#include "seqpen/errors.hpp"
#include "seqpen/idx.hpp"
#include "seqpen/inner_solver.hpp"
#include "seqpen/outer_driver.hpp"
#include "seqpen/penalty.hpp"
#include "seqpen/problem.hpp"
