// populated later
int main(){return 0;}
