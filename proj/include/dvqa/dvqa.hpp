#pragma once

#include "dvqa/simulator.hpp"
#include "dvqa/pauli_frame.hpp"
#include "dvqa/classical_he.hpp"
#include "dvqa/trapdoor.hpp"
#include "dvqa/rsp_gadget.hpp"
#include "dvqa/qhe.hpp"
#include "dvqa/skdecomp.hpp"
#include "dvqa/dataset.hpp"
#include "dvqa/vqa.hpp"
#include "dvqa/delegated.hpp"
#include "dvqa/wire.hpp"
#include "dvqa/protocol.hpp"
#include "dvqa/reports.hpp"
#include "dvqa/verify.hpp"
#include "dvqa/plot.hpp"
#include "dvqa/cli.hpp"
