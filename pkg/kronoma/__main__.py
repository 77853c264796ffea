from kronoma.cli import main

main()
