"""afd-explorer - Schemas Package"""
from afdx.schemas.units import *
from afdx.schemas.model import *
from afdx.schemas.workload import *
from afdx.schemas.cluster import *
from afdx.schemas.deployment import *
from afdx.schemas.costs import *
from afdx.schemas.traffic import *
from afdx.schemas.network import *
from afdx.schemas.pipeline import *
from afdx.schemas.memory import *
from afdx.schemas.placement import *
from afdx.schemas.estimate import *
from afdx.schemas.manifest import *
from afdx.schemas.search import *
from afdx.schemas.scenario import *
from afdx.schemas.requests import *
