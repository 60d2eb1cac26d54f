from pixlab.main import main

main()
