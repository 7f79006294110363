name = 'stratum'
version = '0.1.0'
description = 'Reactive transport in fractured porous media with reduced precipitation layers.'
url = ''
author = 'stratum developers'
author_email = ''
