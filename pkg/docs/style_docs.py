"""Groups the sub-module listing of the pdoc index page by layer."""
import re

GROUPS = [
    ('Inputs', ['chem', 'data']),
    ('Graphs and model', ['graphs', 'models', 'tensor', 'losses']),
    ('Training and evaluation', ['utils', 'split', 'coldstart', 'metrics']),
    ('Running', ['pipeline', 'config', 'cli', 'errors']),
]

with open('index.html', 'r') as f:
    data = f.read()

# remove header
data = data.replace('<h1 class="title">Module <code>hgdta</code></h1>', '')

# sub-module entries of the index body, keyed by module name
found = re.findall(r'(<dt><code class="name"><a title="hgdta\.(\w+)".*?</dd>)', data, flags=re.S)
entries = {name: block for block, name in found}
listing = re.search(r'<dl>\s*<dt><code class="name"><a title="hgdta\..*?</dl>', data, flags=re.S)
if listing and entries:
    grouped = []
    for title, names in GROUPS:
        blocks = [entries.pop(n) for n in names if n in entries]
        if blocks:
            grouped.append(f'<h3>{title}</h3>\n<dl>\n' + '\n'.join(blocks) + '\n</dl>')
    if entries:
        grouped.append('<h3>Other</h3>\n<dl>\n' + '\n'.join(entries.values()) + '\n</dl>')
    data = data[:listing.start()] + '\n'.join(grouped) + data[listing.end():]

with open('index.html', 'w') as f:
    f.write(data)
