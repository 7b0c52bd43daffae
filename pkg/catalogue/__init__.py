from catalogue.catalogue import *
from catalogue.quality_cuts import *
from catalogue.normalization import *
from catalogue.splitting import *
from catalogue.virial import *
from catalogue.synthetic import *
from catalogue.schema.schema_parser import Schema
