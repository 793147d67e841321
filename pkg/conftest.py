import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'ehcrsim.settings')
django.setup()
